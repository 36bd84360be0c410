#pragma once

#include <optional>
#include <string>

#include "protex/config.hpp"
#include "protex/model.hpp"
#include "protex/optim.hpp"

namespace protex {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  PrototypeHead head;
  TrainConfig config;
  std::optional<OptimizerState> optimizer;
};

/// Text checkpoint:
///
///   PTEXCKPT <version>
///   config <key> <value>          (one line per TrainConfig field)
///   head normalize <0|1>
///   head epsilon <value>
///   proto_class <m> c_1 ... c_m
///   matrix <name> <rows> <cols>   followed by one line per row
///   ...
///   end
///
/// Matrices are projection, prototypes, linear, and, when optimizer state is
/// saved, opt.<group>.first / opt.<group>.second with `steps <group> ...`
/// lines. Doubles use shortest round-trip formatting.
void save_checkpoint(const std::string& path, const PrototypeHead& head, const TrainConfig& config,
                     const OptimizerState* optimizer = nullptr);

/// Throws VersionMismatchError, CorruptedFileError or IoError.
Checkpoint load_checkpoint(const std::string& path);

std::string format_double(double v);

}  // namespace protex
