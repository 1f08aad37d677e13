#pragma once
// Command-line surface. The entry point is a plain function so tests can
// drive every subcommand in-process and assert on exit codes and output.

#include <iosfwd>
#include <string>
#include <vector>

#include "cclab/data.hpp"
#include "cclab/trainer.hpp"

namespace cclab {

// One experiment description: the dataset recipe plus the training recipe.
// A single `mode`/`seed` pair feeds both halves so an echoed config file
// reproduces the run it came from.
struct RunConfig {
  DatasetConfig data;
  TrainConfig train;
};

// Strict merge of a JSON object into `cfg`: every key must belong to the
// documented schema (an unknown key is rejected by name), absent keys keep
// their current values. Throws std::invalid_argument on schema violations.
void apply_config_json(RunConfig& cfg, const std::string& json_text);

// Fully-resolved schema round-trip of the merge above.
std::string config_to_json(const RunConfig& cfg);

// Exit codes: 0 all requested outputs written, 1 usage or configuration
// error, 2 runtime failure (missing inputs, I/O, training/eval faults).
// Relative --out paths are joined under $CCLAB_OUT_ROOT when it is set.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Test convenience: argv without the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cclab
