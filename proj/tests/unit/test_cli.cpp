#include <filesystem>
#include <random>

#include "cli/commands.hpp"
#include "cli/io.hpp"
#include "distmatch/error.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace distmatch;
using namespace distmatch::cli;

namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = DISTMATCH_FIXTURE_DIR;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("distmatch_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const Artifact& artifact(const RunOutput& out, const std::string& name) {
  for (const auto& a : out.artifacts)
    if (a.name == name) return a;
  FAIL("missing artifact " << name);
  throw std::logic_error("unreachable");
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto end = text.find('\n', pos);
    out.push_back(text.substr(pos, end - pos));
    if (end == std::string::npos) break;
    pos = end + 1;
  }
  return out;
}

// A small generated dataset on disk, shared by the command tests.
fs::path generated_data(const fs::path& dir) {
  RunConfig g;
  g.command = "generate";
  g.dgp = "Linear";
  g.n = 150;
  g.seed = 4;
  g.grid.points = 9;
  g.grid_given = true;
  g.out = dir;
  write_outputs(g, run_command(g));
  return dir / "data.jsonl";
}

RunConfig quick(const std::string& command, const fs::path& data, const fs::path& out) {
  RunConfig c;
  c.command = command;
  c.data = data;
  c.out = out;
  c.k_train = c.k_est = c.k_diag = 5;
  c.starts = 2;
  c.budget = 20;
  c.seed = 12;
  return c;
}

}  // namespace

TEST_SUITE("ingestion") {
  TEST_CASE("three-unit fixture with raw samples") {
    auto r = ingest(kFixtures / "three_units.jsonl", std::nullopt, std::nullopt);
    REQUIRE(r.header_grid.has_value());
    CHECK(r.header_grid->points == 9);
    const auto& d = r.data;
    CHECK(d.size() == 3);
    // age, sex=F, sex=M, steps
    REQUIRE(d.dimension() == 4);
    CHECK(d.schema().covariates[1].name == "sex=F");
    CHECK(d.schema().covariates[1].kind == CovariateKind::CategoricalLevel);
    CHECK(d.schema().covariates[3].kind == CovariateKind::Distribution);
    const auto& u = d.unit(*d.find(2));
    CHECK(u.covariates[0][0] == 47.0);
    CHECK(u.covariates[1][0] == 0.0);
    CHECK(u.covariates[2][0] == 1.0);
    CHECK(u.covariates[3].support_lo() == 7600.0);
    for (const auto& unit : d.units()) {
      CHECK(unit.outcome.size() == 9);
      for (std::size_t i = 1; i < 9; ++i) CHECK(unit.outcome[i] >= unit.outcome[i - 1]);
    }
    // ecdf step: unit 3 outcomes sorted {140,155,160,170,190}; q = 0.5 -> 160
    CHECK(d.unit(*d.find(3)).outcome[4] == 160.0);
  }

  TEST_CASE("malformed line is reported with its number") {
    try {
      ingest(kFixtures / "malformed.jsonl", std::nullopt, std::nullopt);
      FAIL("expected a parse error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::ParseError);
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }

  TEST_CASE("wrong quantile length") {
    CHECK_ERRC(ingest(kFixtures / "wrong_length.jsonl", std::nullopt, std::nullopt), Errc::GridMismatch);
  }

  TEST_CASE("schema from a separate file and unknown fields") {
    auto schema = load_schema_file(kFixtures / "schema.json");
    const std::string text =
        "{\"id\": 1, \"treatment\": 0, \"covariates\": {\"age\": 1, \"sex\": \"M\"}, \"outcome\": {\"samples\": [1]}}\n"
        "{\"id\": 2, \"treatment\": 1, \"covariates\": {\"age\": 2, \"sex\": \"F\"}, \"outcome\": {\"samples\": [2]}}\n";
    auto r = ingest_text(text, schema, GridSpec{5, 0.0, 1.0});
    CHECK(r.data.size() == 2);
    CHECK_ERRC(ingest_text(text, std::nullopt, GridSpec{}), Errc::SchemaError);
    const std::string bad_level =
        "{\"id\": 1, \"treatment\": 0, \"covariates\": {\"age\": 1, \"sex\": \"X\"}, \"outcome\": {\"samples\": [1]}}\n";
    CHECK_ERRC(ingest_text(bad_level, schema, GridSpec{}), Errc::SchemaError);
    const std::string missing =
        "{\"id\": 1, \"treatment\": 0, \"covariates\": {\"age\": 1}, \"outcome\": {\"samples\": [1]}}\n";
    CHECK_ERRC(ingest_text(missing, schema, GridSpec{}), Errc::SchemaError);
  }

  TEST_CASE("property: serialization round trip is lossless") {
    std::mt19937_64 rng(61);
    for (int trial = 0; trial < 20; ++trial) {
      GridSpec gs{3 + rng() % 20, 0.0, 1.0};
      if (trial % 2) gs = GridSpec{gs.points, 0.025, 0.975};
      auto data = testing::random_dataset(rng, 8 + rng() % 10, 2, gs.make());
      const auto schema = input_schema_of(data.schema());
      const auto text = serialize(data, schema, gs);
      auto back = ingest_text(text, std::nullopt, std::nullopt);
      REQUIRE(back.header_grid.has_value());
      CHECK(*back.header_grid == gs);
      REQUIRE(back.data.size() == data.size());
      for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& a = data.unit(i);
        const auto& b = back.data.unit(i);
        CHECK(a.id == b.id);
        CHECK(a.treatment == b.treatment);
        CHECK(a.outcome == b.outcome);
        CHECK(a.outcome.support_lo() == b.outcome.support_lo());
        for (std::size_t l = 0; l < a.covariates.size(); ++l) CHECK(a.covariates[l] == b.covariates[l]);
      }
      CHECK(serialize(back.data, back.schema, gs) == text);
    }
  }

  TEST_CASE("numbers and hashes") {
    CHECK(format_number(0.1) == "0.1");
    CHECK(format_number(3.0) == "3");
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  }
}

TEST_SUITE("subgroups") {
  TEST_CASE("scalar and categorical filters") {
    auto r = ingest(kFixtures / "three_units.jsonl", std::nullopt, std::nullopt);
    const auto& d = r.data;
    auto older = parse_subgroup("age > 55", d.schema());
    auto women_under_60 = parse_subgroup("sex == F && age <= 60", d.schema());
    auto not_f = parse_subgroup("sex!=F", d.schema());
    CHECK(older(d.unit(*d.find(1))));
    CHECK_FALSE(older(d.unit(*d.find(2))));
    CHECK(women_under_60(d.unit(*d.find(3))));
    CHECK_FALSE(women_under_60(d.unit(*d.find(1))));
    CHECK(not_f(d.unit(*d.find(2))));
    CHECK_ERRC(parse_subgroup("height > 3", d.schema()), Errc::InvalidArgument);
    CHECK_ERRC(parse_subgroup("sex > F", d.schema()), Errc::InvalidArgument);
    CHECK_ERRC(parse_subgroup("steps > 3", d.schema()), Errc::InvalidArgument);
    CHECK_ERRC(parse_subgroup("age >", d.schema()), Errc::InvalidArgument);
  }
}

TEST_SUITE("commands") {
  TEST_CASE("estimate writes one ate row per grid level") {
    const auto dir = scratch("estimate");
    const auto data = generated_data(dir / "gen");
    auto c = quick("estimate", data, dir / "est");
    c.subgroups = {"x0 > 0"};
    auto out = run_command(c);
    const auto ate = lines(artifact(out, "ate.csv").contents);
    REQUIRE(ate.size() == 10);
    CHECK(ate[0] == "q,tau,var,lo,hi");
    CHECK(lines(artifact(out, "subgroups.csv").contents)[0] == "subgroup,expression,n");
    CHECK(lines(artifact(out, "subgroup_0.csv").contents).size() == 10);
    artifact(out, "model.json");

    c.bias_correct = true;
    CHECK(lines(artifact(run_command(c), "ate.csv").contents)[0] == "q,tau,tau_bcm,var,lo,hi");
  }

  TEST_CASE("fit then reuse the model") {
    const auto dir = scratch("fit");
    const auto data = generated_data(dir / "gen");
    auto fit = quick("fit", data, dir / "fit");
    write_outputs(fit, run_command(fit));
    CHECK(fs::exists(dir / "fit" / "model.json"));
    CHECK(lines(read_file(dir / "fit" / "weights.csv"))[0] == "covariate,weight");
    auto est = quick("estimate", data, dir / "est");
    est.model = dir / "fit" / "model.json";
    auto out = run_command(est);
    for (const auto& a : out.artifacts) CHECK(a.name != "model.json");
  }

  TEST_CASE("diagnose tables") {
    const auto dir = scratch("diagnose");
    const auto data = generated_data(dir / "gen");
    auto out = run_command(quick("diagnose", data, dir / "diag"));
    CHECK(lines(artifact(out, "overlap.csv").contents)[0] == "id,treatment,diameter,flagged");
    CHECK(artifact(out, "matched_groups.txt").contents.find("—") != std::string::npos);
  }

  TEST_CASE("identical config and seed give identical artifact bytes") {
    const auto dir = scratch("determinism");
    const auto data = generated_data(dir / "gen");
    for (const char* cmd : {"fit", "estimate", "diagnose"}) {
      auto a = quick(cmd, data, dir / "a");
      auto b = quick(cmd, data, dir / "b");
      write_outputs(a, run_command(a));
      const auto manifest = read_file(dir / "a" / "manifest.json");
      write_outputs(a, run_command(a));
      CHECK(read_file(dir / "a" / "manifest.json") == manifest);
      b.threads = 2;
      write_outputs(b, run_command(b));
      for (const auto& entry : fs::directory_iterator(dir / "a")) {
        const auto name = entry.path().filename();
        if (name == "manifest.json") continue;  // echoes the differing config
        CHECK_MESSAGE(read_file(entry.path()) == read_file(dir / "b" / name), name.string());
      }
      fs::remove_all(dir / "a");
      fs::remove_all(dir / "b");
    }
    auto g1 = quick("generate", "", dir / "g1");
    g1.n = 40;
    auto g2 = g1;
    g2.out = dir / "g2";
    write_outputs(g1, run_command(g1));
    write_outputs(g2, run_command(g2));
    CHECK(read_file(dir / "g1" / "data.jsonl") == read_file(dir / "g2" / "data.jsonl"));
    CHECK(read_file(dir / "g1" / "truth.csv") == read_file(dir / "g2" / "truth.csv"));
  }

  TEST_CASE("unknown command") {
    RunConfig c;
    c.command = "explode";
    CHECK_ERRC(run_command(c), Errc::InvalidArgument);
  }
}
