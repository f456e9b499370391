#include "oswitch/errors.hpp"
#include "oswitch/instance.hpp"
#include "oswitch/report.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) oswitch::fail(oswitch::ErrorKind::IoError, "cannot write " + path.string());
    out << text;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Optimal switching / reflected BSDE solver on finite Markov chains"};
    std::string command, instance_path, out_dir;
    std::uint64_t seed = 0;
    bool no_timestamps = false;
    app.add_option("command", command, "Command to run")
        ->required()
        ->check(CLI::IsMember(oswitch::command_names()));
    app.add_option("--instance", instance_path, "Instance JSON file")->required();
    app.add_option("--out", out_dir, "Output directory for report.json and CSV series");
    auto* seed_opt = app.add_option("--seed", seed, "Override run.seed");
    app.add_flag("--no-timestamps", no_timestamps, "Omit the timestamp from the report");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    oswitch::RunFlags flags;
    if (*seed_opt) flags.seed = seed;
    const char* env = std::getenv("OSWITCH_NO_TIMESTAMPS");
    flags.timestamps = !no_timestamps && !(env && *env && std::string(env) != "0");

    try {
        const oswitch::InstanceFile inst = oswitch::parse_instance(instance_path);
        const oswitch::RunReport report = oswitch::run_command(command, inst, flags);
        const std::string doc = report.to_json(inst, flags).dump(2) + "\n";
        if (out_dir.empty()) {
            std::cout << doc;
        } else {
            fs::create_directories(out_dir);
            write_file(fs::path(out_dir) / "report.json", doc);
            for (const auto& t : report.tables) write_file(fs::path(out_dir) / t.name, oswitch::render_csv(t));
            for (const auto& [name, body] : report.exports) write_file(fs::path(out_dir) / name, body.dump(2) + "\n");
        }
        for (const auto& c : report.invariants)
            if (!c.pass)
                std::cerr << "invariant failed: " << c.name << " = " << c.value << " (required " << c.relation << " "
                          << c.threshold << ")\n";
        return report.pass() ? 0 : 1;
    } catch (const oswitch::SchemaError& e) {
        std::cerr << "error: " << instance_path << " failed validation\n";
        for (const auto& issue : e.issues()) std::cerr << "  " << issue.path << ": " << issue.message << "\n";
        return 2;
    } catch (const oswitch::Error& e) {
        std::cerr << "error: " << command << " on " << instance_path << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
