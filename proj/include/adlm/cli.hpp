#pragma once

namespace adlm::cli {

// Distinct exit codes per failure family, mirrored in the README.
constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;        // malformed config or arguments
constexpr int kMismatch = 3;     // vocabulary/checkpoint disagreement
constexpr int kSchedule = 4;     // schedule validity failure
constexpr int kOracleFail = 5;   // an oracle assertion did not hold

int run(int argc, char** argv);

}  // namespace adlm::cli
