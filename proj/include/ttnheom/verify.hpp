#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ttnheom::verify {

enum class Suite { Small, Full };

Suite parse_suite(const std::string& s);

struct Result {
  std::string id;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

// Criterion ids in run order.
std::vector<std::string> criteria(Suite suite);

// Runs the criteria in order, printing one line per criterion as it finishes.
std::vector<Result> run_suite(Suite suite, std::ostream& out);
std::vector<Result> run_criteria(const std::vector<std::string>& ids, std::ostream& out);

std::string format(const Result& r);

}  // namespace ttnheom::verify
