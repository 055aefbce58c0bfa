#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace spamri::cli {

/// Raises glibc's mmap and trim thresholds. Training allocates and frees
/// megabyte-sized buffers per sample, which otherwise round-trips to the kernel.
void tune_allocator();

/// Runs one command line. Returns 0 on success, 1 on usage or validation
/// errors and 2 on runtime failures.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace spamri::cli
