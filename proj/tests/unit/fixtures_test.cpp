#include <fstream>
#include <sstream>

#include <unistd.h>

#include <fmt/format.h>
#include <gtest/gtest.h>

#include "fixture_inputs.hpp"

namespace gseo {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// The checked-in fixtures and rendered goldens must be exactly what the
// synthetic model and the current code produce.
TEST(Fixtures, RegeneratedFixturesMatchCheckedIn) {
  const fs::path dir = fs::temp_directory_path() / fmt::format("gseo-regen-{}", ::getpid());
  fs::remove_all(dir);
  testing::generate_fixtures(dir);
  for (const char* name : {"strategies.jsonl", "reflection.jsonl", "cli.jsonl"}) {
    EXPECT_EQ(slurp(dir / name), slurp(testing::repo_root() / "tests" / "fixtures" / name)) << name;
  }
  fs::remove_all(dir);
}

TEST(Fixtures, RegeneratedGoldensMatchCheckedIn) {
  const fs::path dir = fs::temp_directory_path() / fmt::format("gseo-goldens-check-{}", ::getpid());
  fs::remove_all(dir);
  testing::generate_rendered_goldens(dir);
  int files = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    EXPECT_EQ(slurp(e.path()), slurp(testing::repo_root() / "tests" / "golden" / e.path().filename()))
        << e.path().filename();
    ++files;
  }
  EXPECT_EQ(files, 7);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace gseo
