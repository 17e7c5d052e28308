#pragma once

// Small output helpers shared by the experiment drivers and the CLI.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <iosfwd>
#include <string>
#include <vector>

namespace ame {

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

// Minimal RFC 4180 writer: fields containing ',', '"' or newlines are quoted.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}

  void row(std::initializer_list<std::string> fields);
  void row(const std::vector<std::string>& fields);

 private:
  std::ostream& out_;
};

// Runs body(i) for i in [0, n) on up to `threads` workers (0 = hardware
// concurrency). Results must be written to per-index slots by the caller.
// The first exception thrown by any body is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                  unsigned threads = 0);

}  // namespace ame
