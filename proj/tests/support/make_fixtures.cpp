// Regenerates tests/fixtures from the synthetic model, or with --goldens the
// rendered goldens under tests/golden (answer prompt, toy reports, distributions).
//   gseo_make_fixtures [dest]
//   gseo_make_fixtures --goldens [dest]
#include <iostream>

#include "fixture_inputs.hpp"
#include "gseo/error.hpp"

int main(int argc, char** argv) {
  const bool goldens = argc > 1 && std::string(argv[1]) == "--goldens";
  const int path_arg = goldens ? 2 : 1;
  const std::filesystem::path dest =
      argc > path_arg ? std::filesystem::path(argv[path_arg])
                      : gseo::testing::repo_root() / "tests" / (goldens ? "golden" : "fixtures");
  try {
    if (goldens) {
      gseo::testing::generate_rendered_goldens(dest);
    } else {
      gseo::testing::generate_fixtures(dest);
    }
  } catch (const gseo::Error& e) {
    std::cerr << "error: " << e.code() << ": " << e.what() << "\n";
    return 2;
  }
  std::cout << (goldens ? "goldens written to " : "fixtures written to ") << dest.string() << "\n";
  return 0;
}
