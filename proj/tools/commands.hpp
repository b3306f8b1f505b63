#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace novctl::cli {

enum ExitCode : int { kOk = 0, kValidation = 1, kIo = 2, kNumeric = 3 };

struct Overrides {
    std::optional<int> stride;
    std::optional<double> dt;
    std::optional<double> t_end;
    bool auto_dt = false;  // shrink dt to the stiffness estimate
};

struct RunOptions {
    std::filesystem::path scenario;
    std::filesystem::path out_dir = ".";
    bool csv = false;
    bool plot = false;
    Overrides overrides;
};

struct SweepOptions {
    std::filesystem::path scenario;
    std::string axis;
    std::vector<double> values;
    std::filesystem::path out_dir = ".";
    unsigned jobs = 0;  // 0: hardware concurrency
    Overrides overrides;
};

int cmd_validate(const std::filesystem::path& scenario, std::ostream& out, std::ostream& err);
int cmd_run(const RunOptions& opts, std::ostream& out, std::ostream& err);
int cmd_sweep(const SweepOptions& opts, std::ostream& out, std::ostream& err);
int cmd_bounds(const std::filesystem::path& scenario, const Overrides& overrides, std::ostream& out,
               std::ostream& err);

/// Parses argv and dispatches.
int main(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace novctl::cli
