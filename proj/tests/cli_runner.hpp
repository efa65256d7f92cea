#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace lutq::test {

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

inline std::filesystem::path cli_workdir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("lutq-" + name);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline void spit(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << content;
}

// Runs the lutq binary with the given arguments, capturing stdout/stderr.
inline CliResult run_cli(const std::string& args, const std::filesystem::path& workdir) {
    const auto out_path = workdir / "stdout.txt";
    const auto err_path = workdir / "stderr.txt";
    const std::string cmd = std::string(LUTQ_CLI_PATH) + " " + args + " > " +
                            out_path.string() + " 2> " + err_path.string();
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.out = slurp(out_path);
    r.err = slurp(err_path);
    if (status == -1) {
        r.exit_code = -1;
    } else {
        r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -2;
    }
    return r;
}

} // namespace lutq::test
