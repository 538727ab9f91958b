#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "logrecon/phantom.hpp"

namespace logrecon {

/// The logrecon command line: `args` excludes the program name. Returns 0 on
/// success, 2 on a usage error and 1 on a runtime failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// On-disk layouts shared by the subcommands.
void save_log(const std::string& volume_path, const LogPhantom& phantom, const LogPhantomSpec& spec);
LogPhantom load_log(const std::string& volume_path);

void save_dataset(const std::string& dir, const SliceDataset& data, const LogPhantom& phantom, double noise_sigma);
// `window` / `strategy` re-window the stored slices; window 0 keeps the stored layout.
SliceDataset load_dataset(const std::string& dir, int window = 0, const TargetStrategy* strategy = nullptr);

}  // namespace logrecon
