#pragma once

#include "oswitch/instance.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace oswitch {

struct CsvTable {
    std::string name;  // file name inside the output directory
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

/// RFC-4180 rendering (CRLF line ends, quoting only where needed).
std::string render_csv(const CsvTable& table);
std::string csv_number(double v);

struct InvariantCheck {
    std::string name;
    double value = 0.0;
    double threshold = 0.0;
    std::string relation;  // "<=" or ">="
    bool pass = true;
};

struct RunFlags {
    std::optional<std::uint64_t> seed;
    bool timestamps = true;
};

struct RunReport {
    std::string command;
    nlohmann::json results = nlohmann::json::object();
    std::vector<InvariantCheck> invariants;
    std::vector<CsvTable> tables;
    /// Extra JSON exports (file name, document).
    std::vector<std::pair<std::string, nlohmann::json>> exports;

    bool pass() const;
    nlohmann::json to_json(const InstanceFile& inst, const RunFlags& flags) const;
};

const std::vector<std::string>& command_names();

/// Dispatches one command. Module errors propagate as oswitch::Error.
RunReport run_command(const std::string& command, const InstanceFile& inst, const RunFlags& flags);

}  // namespace oswitch
