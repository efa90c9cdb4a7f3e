#pragma once

// Self-describing text checkpoints of a model and, optionally, its optimizer
// state. Every double is written as a hexfloat so a load restores the exact
// bits that were saved.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "smelu/net.hpp"
#include "smelu/optim.hpp"

namespace smelu {

struct Checkpoint {
  Model model;
  std::optional<Optimizer> optimizer;
};

void write_checkpoint(std::ostream& out, const Model& model, const Optimizer* optimizer = nullptr);
void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const Optimizer* optimizer = nullptr);

/// Throws ParseError on malformed input and IoError when the file cannot be read.
Checkpoint read_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace smelu
