#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "lesionmap/model.hpp"
#include "lesionmap/preprocess.hpp"

namespace lesionmap::cli {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // operational failure (I/O, bad data, training error)
inline constexpr int kExitUsage = 2;    // unknown subcommand or flag, missing or invalid option value

/// Runs one command line. argv[0] is the program name. Results go to `out`,
/// diagnostics and the resolved configuration go to `err`.
int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

/// Settings stored next to a weight file so that eval and explain rebuild the
/// same network and apply the same preprocessing the model was trained with.
struct ModelSidecar {
    ModelConfig model;
    Preprocessing preprocessing;
};

std::string format_sidecar(const ModelSidecar& sidecar);
ModelSidecar parse_sidecar(const std::string& text);
std::string sidecar_path(const std::string& weights_path);

}  // namespace lesionmap::cli
