// SPDX-License-Identifier: Apache-2.0
// Runs the built command-line tool and checks files, output and exit codes.
#include <doctest.h>

#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "vtqa_cli_test";

struct Run {
  int code;
  std::string out, err;
};

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Run vtqa(const std::string &args) {
  const fs::path out = kWork / "stdout.txt", err = kWork / "stderr.txt";
  const std::string cmd = std::string("\"") + VTQA_CLI + "\" " + args + " > \"" +
                          out.string() + "\" 2> \"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

int lines(const fs::path &p) {
  const std::string s = slurp(p);
  return static_cast<int>(std::count(s.begin(), s.end(), '\n'));
}

std::string p(const std::string &name) { return (kWork / name).string(); }

/// A fresh scratch directory per test case.
struct Workspace {
  Workspace() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
  }
  ~Workspace() { fs::remove_all(kWork); }
};

} // namespace

TEST_CASE("gen-data") {
  Workspace w;
  const Run r = vtqa("gen-data --out " + p("d") + " --n 100 --seed 3");
  CHECK(r.code == 0);
  CHECK(r.out == "train\t80\nval\t10\ntest\t10\n");
  CHECK(lines(kWork / "d" / "train.jsonl") == 80);
  CHECK(lines(kWork / "d" / "val.jsonl") == 10);
  CHECK(lines(kWork / "d" / "test.jsonl") == 10);

  CHECK(vtqa("gen-data --out " + p("e") + " --n 100 --seed 3").code == 0);
  for (const char *split : {"train.jsonl", "val.jsonl", "test.jsonl"})
    CHECK(slurp(kWork / "d" / split) == slurp(kWork / "e" / split));

  CHECK(vtqa("gen-data --out " + p("f") + " --n 20 --sidecar").code == 0);
  CHECK(fs::exists(kWork / "f" / "train.feat"));

  const Run bad = vtqa("gen-data --out " + p("g") + " --clue-rate 1.5");
  CHECK(bad.code == 2);
  CHECK(bad.err.find("clue_rate") != std::string::npos);
  CHECK(vtqa("gen-data --out /proc/vtqa_cannot_write --n 10").code == 2);
}

TEST_CASE("usage errors") {
  Workspace w;
  CHECK(vtqa("").code == 2);
  CHECK(vtqa("frobnicate").code == 2);
  CHECK(vtqa("gen-data --out " + p("d") + " --bogus-flag").code == 2);
  CHECK(vtqa("train --data " + p("nowhere") + " --out " + p("m.ckpt")).code == 2);
}

TEST_CASE("train, eval and visualize-attention") {
  Workspace w;
  REQUIRE(vtqa("gen-data --out " + p("d") + " --n 60 --clue-rate 1 --dim 64").code == 0);

  CHECK(vtqa("train --data " + p("d") + " --variant mfb --out " + p("x.ckpt")).code == 2);
  CHECK(vtqa("train --data " + p("d") + " --preset huge --out " + p("x.ckpt")).code == 2);

  const Run t = vtqa("train --data " + p("d") + " --epochs 1 --quiet --out " + p("m.ckpt"));
  REQUIRE(t.code == 0);
  CHECK(fs::exists(kWork / "m.ckpt"));
  const auto metrics = nlohmann::json::parse(slurp(kWork / "m.ckpt.metrics.json"));
  CHECK(metrics["non_paper_defaults"].contains("batch_size"));
  CHECK(metrics["non_paper_defaults"].contains("loss"));
  CHECK(t.out.find("test_accuracy") != std::string::npos);

  const Run vqa = vtqa("train --data " + p("d") + " --variant vqa --no-lf --epochs 1 --quiet --out " +
                       p("v.ckpt") + " --metrics " + p("v.json"));
  CHECK(vqa.code == 0);
  CHECK(vqa.err.find("warning") != std::string::npos);
  CHECK(fs::exists(kWork / "v.json"));

  const Run e = vtqa("eval --ckpt " + p("m.ckpt") + " --data " + p("d") + " --report " +
                     p("r.json"));
  CHECK(e.code == 0);
  CHECK(e.out.find("samples\t6") != std::string::npos);
  const auto report = nlohmann::json::parse(slurp(kWork / "r.json"));
  CHECK(report["accuracy"].get<double>() == metrics["test_accuracy"].get<double>());
  CHECK(vtqa("eval --ckpt " + p("absent.ckpt") + " --data " + p("d")).code == 2);

  {
    std::ofstream junk(kWork / "junk.ckpt");
    junk << "garbage";
  }
  CHECK(vtqa("eval --ckpt " + p("junk.ckpt") + " --data " + p("d")).code == 1);

  const std::string val = slurp(kWork / "d" / "val.jsonl");
  const auto first = nlohmann::json::parse(val.substr(0, val.find('\n')));
  const std::string id = first["id"];
  const Run v = vtqa("visualize-attention --ckpt " + p("m.ckpt") + " --data " +
                     p("d/val.jsonl") + " --id " + id + " --out " + p("a.svg"));
  REQUIRE(v.code == 0);
  std::istringstream is(v.out);
  double total = 0;
  int rows = 0;
  for (std::string line; std::getline(is, line);) {
    const auto tab = line.find('\t');
    if (tab != std::string::npos && line.rfind("sample", 0) != 0) {
      total += std::stod(line.substr(0, tab));
      ++rows;
    }
  }
  CHECK(rows == static_cast<int>(first["paragraph"].size()));
  CHECK(std::abs(total - 1.0) <= 1e-4);
  CHECK(v.out.find("question: ") != std::string::npos);
  const std::string svg = slurp(kWork / "a.svg");
  int bars = 0;
  for (auto pos = svg.find("<rect class=\"bar\""); pos != std::string::npos;
       pos = svg.find("<rect class=\"bar\"", pos + 1))
    ++bars;
  CHECK(bars == rows);

  CHECK(vtqa("visualize-attention --ckpt " + p("m.ckpt") + " --data " + p("d/val.jsonl") +
             " --id no_such_id --out " + p("b.svg"))
          .code == 2);
}

TEST_CASE("ablate") {
  Workspace w;
  REQUIRE(vtqa("gen-data --out " + p("d") + " --n 40").code == 0);
  const Run a = vtqa("ablate --data " + p("d") + " --seeds 1 --epochs 1 --quiet --report " +
                     p("abl.json"));
  REQUIRE(a.code == 0);
  CHECK(std::count(a.out.begin(), a.out.end(), '\n') == 1 + 5 + 5);
  CHECK(a.out.rfind("variant\tseed", 0) == 0);
  const auto j = nlohmann::json::parse(slurp(kWork / "abl.json"));
  CHECK(j["runs"].size() == 5);
  CHECK(j.contains("non_paper_defaults"));
}
