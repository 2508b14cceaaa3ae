#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace gseo::svg {

struct Series {
  std::string name;
  std::vector<double> values;  // one per category
};

std::string escape(std::string_view text);

// Horizontal grouped bars, one group per category. Handles negative values
// by placing the zero axis inside the plot. Output is byte-stable for equal
// input.
std::string grouped_bar_chart(const std::string& title, const std::vector<std::string>& categories,
                              const std::vector<Series>& series);

}  // namespace gseo::svg
