#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + HANDSEG_CLI + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const char* name) {
  auto p = fs::temp_directory_path() / (std::string("handseg_cli_") + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::map<std::string, std::string> sequence_files(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".seq") out[e.path().filename().string()] = slurp(e.path());
  }
  return out;
}

// Turns the annotations of every sequence file into a detection file.
void write_gt_detections(const fs::path& dir, const fs::path& out_path) {
  std::ofstream out(out_path);
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".seq") continue;
    std::ifstream in(e.path());
    std::string line, id;
    bool annotations = false;
    while (std::getline(in, line)) {
      if (line.rfind("#SOURCE ", 0) == 0) id = line.substr(8);
      if (line == "#ANNOTATIONS") {
        annotations = true;
        continue;
      }
      if (!annotations || line.empty()) continue;
      std::istringstream fields(line);
      long label, s, t;
      fields >> label >> s >> t;
      out << id << ' ' << label << ' ' << s << ' ' << t << ' ' << s << '\n';
    }
  }
}

const std::string kConfigs = HANDSEG_CONFIGS;

}  // namespace

TEST_CASE("usage errors exit with 2") {
  auto dir = scratch("usage");
  CHECK(run_cli("") == 2);
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("generate --config /nonexistent/x.cfg --out " + (dir / "out").string()) == 2);
  CHECK(run_cli("infer --checkpoint /nonexistent/m.ckpt --data " + dir.string() + " --out " + (dir / "d.txt").string()) == 2);
  CHECK(run_cli("--version") == 0);
}

TEST_CASE("generation is reproducible and replayable") {
  auto dir = scratch("generate");
  const std::string cfg = kConfigs + "/synth_benchmark.cfg";
  REQUIRE(run_cli("generate --config " + cfg + " --sequences 3 --seed 11 --out " + (dir / "a").string()) == 0);
  REQUIRE(run_cli("generate --config " + cfg + " --sequences 3 --seed 11 --out " + (dir / "b").string()) == 0);
  const auto a = sequence_files(dir / "a");
  CHECK(a.size() == 3);
  CHECK(a == sequence_files(dir / "b"));
  CHECK(fs::exists(dir / "a" / "manifest.json"));
  CHECK(fs::exists(dir / "a" / "dictionary.txt"));

  fs::remove_all(dir / "b");
  REQUIRE(run_cli("replay " + (dir / "a" / "manifest.json").string()) == 0);
  CHECK(a == sequence_files(dir / "a"));
  CHECK(run_cli("replay " + (dir / "missing.json").string()) == 2);
}

TEST_CASE("ground truth scored against itself") {
  auto dir = scratch("eval");
  REQUIRE(run_cli("generate --config " + kConfigs + "/synth_benchmark.cfg --sequences 4 --out " + (dir / "gt").string()) == 0);
  write_gt_detections(dir / "gt", dir / "det.txt");
  REQUIRE(run_cli("eval --gt " + (dir / "gt").string() + " --detections " + (dir / "det.txt").string() + " --out " +
                  (dir / "report").string() + " --per-class --fp-by-category --per-sequence --ji-mor-sweep 0.1:1.0:0.1") == 0);
  std::ifstream agg(dir / "report" / "aggregate.csv");
  std::string header, row;
  std::getline(agg, header);
  std::getline(agg, row);
  CHECK(header.rfind("protocol,mor,gestures,matched,false_positives,dr,", 0) == 0);
  std::vector<std::string> fields;
  std::stringstream ss(row);
  for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
  REQUIRE(fields.size() >= 11);
  CHECK(fields[2] == "12");
  CHECK(fields[3] == "12");
  CHECK(fields[4] == "0");
  CHECK(std::stod(fields[5]) == 1.0);
  CHECK(std::stod(fields[7]) == 0.0);
  CHECK(std::stod(fields[9]) == 1.0);
  for (const char* f : {"per_class.csv", "fp_by_category.csv", "per_sequence.csv", "ji_mor.csv"}) {
    CHECK(fs::exists(dir / "report" / f));
  }
  CHECK(run_cli("eval --gt " + (dir / "gt").string() + " --detections " + (dir / "det.txt").string() + " --out " +
                (dir / "r2").string() + " --mor 0") == 2);
  std::ofstream(dir / "bad.txt") << "x 1 2\n";
  CHECK(run_cli("eval --gt " + (dir / "gt").string() + " --detections " + (dir / "bad.txt").string() + " --out " +
                (dir / "r3").string()) == 3);
}

TEST_CASE("train then infer") {
  auto dir = scratch("train");
  REQUIRE(run_cli("generate --config " + kConfigs + "/synth_benchmark.cfg --sequences 4 --out " + (dir / "data").string()) == 0);
  std::ofstream(dir / "train.cfg") << "window = 16\nstride = 8\nepochs = 1\nencoder_convs = 8:3\nhead_convs = -\n";
  REQUIRE(run_cli("train --quiet --data " + (dir / "data").string() + " --config " + (dir / "train.cfg").string() +
                  " --out " + (dir / "model").string()) == 0);
  fs::path ckpt;
  for (const auto& e : fs::directory_iterator(dir / "model")) {
    if (e.path().extension() == ".ckpt") ckpt = e.path();
  }
  REQUIRE_FALSE(ckpt.empty());
  REQUIRE(run_cli("infer --checkpoint " + ckpt.string() + " --data " + (dir / "data").string() + " --out " +
                  (dir / "det.txt").string()) == 0);
  CHECK(fs::exists(dir / "det.txt"));
  CHECK(run_cli("infer --checkpoint " + ckpt.string() + " --w 32 --data " + (dir / "data").string() + " --out " +
                (dir / "det2.txt").string()) == 2);
  CHECK(run_cli("train --quiet --data " + (dir / "data").string() + " --config " + (dir / "train.cfg").string() +
                " --epochs 0 --out " + (dir / "m2").string()) == 2);
}
