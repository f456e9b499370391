#pragma once

#include "oswitch/bsde_dp.hpp"
#include "oswitch/chain_model.hpp"
#include "oswitch/drivers.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace oswitch {

/// Tolerances, caps and Monte Carlo settings of the run section.
struct RunConfig {
    double tol = 1e-10;
    int max_sweeps = 10000;
    bool gauss_seidel = false;
    std::uint64_t seed = 1;
    std::vector<double> penalty_levels{1, 4, 16, 64, 256};
    std::int64_t paths = 100000;
    Index x0 = 0;
    Index j0 = 0;  // 0-based internally, 1-based in the file
    double enumeration_cap = 1e6;
    std::vector<Index> horizons;
    double contact_tol = 1e-9;
};

struct InstanceFile {
    std::string source;
    std::string digest;  // FNV-1a 64 of the file bytes, hex
    ChainSpec chain_spec;
    std::optional<Generator> generator;
    std::optional<TimeGrid> grid;
    std::optional<DriverSystem> driver;
    std::optional<BarrierSystem> barrier;
    RunConfig run;

    const Generator& gen() const { return *generator; }
    const DriverSystem& drv() const { return *driver; }
    const BarrierSystem& bar() const { return *barrier; }
};

/// Reads and validates an instance file. Throws IoError when the file cannot
/// be read and SchemaError with every issue found otherwise.
InstanceFile parse_instance(const std::string& path);

/// Same as parse_instance on an in-memory document.
InstanceFile parse_instance_json(const nlohmann::json& doc, const std::string& source, const std::string& digest);

std::string fnv1a_hex(const std::string& bytes);

}  // namespace oswitch
