#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>
#include <string>

#include "loopscale/dataset.hpp"
#include "loopscale/errors.hpp"
#include "oracles.hpp"

using namespace loopscale;

namespace {

const char* kHeader = "r,s,l_eff,n_prelude,n_coda,injection,bptt,r_bwd,budget_flops,tokens,val_loss,variant\n";

std::vector<RunRecord> parse_csv(const std::string& body, const LoadOptions& opts = {}) {
  std::istringstream in(kHeader + body);
  return load_runs(in, RunFormat::delimited, opts);
}

JointParams truth() {
  return {ChinchillaParams::from_amplitudes(oracle::kTruthA, oracle::kTruthAlpha, oracle::kTruthB,
                                            oracle::kTruthBeta, oracle::kTruthE),
          oracle::kTruthPhi};
}

}  // namespace

TEST_CASE("delimited runs load in order") {
  const auto runs = parse_csv(
      "1,10,20,2,2,none,full,,4.64e17,4.5e8,3.1,baseline\n"
      "4,10,20,2,2,linear,trunc,2,1e18,9.5e8,3.0,trunc\n"
      "8,12,20,2,2,hyper:4,full,,2.15E18,1.2e9,2.9,hyper\n");
  REQUIRE(runs.size() == 3);
  CHECK(runs[0].shape == ModelShape::baseline(10));
  CHECK(runs[1].recipe == TrainingRecipe::truncated(2));
  CHECK(runs[1].variant == "trunc");
  CHECK(runs[2].shape.injection == Injection::hyper(4));
  CHECK(runs[2].budget == 2.15e18);
}

TEST_CASE("columns are matched by header name") {
  std::istringstream in(
      "variant,val_loss,tokens,budget_flops,r_bwd,bptt,injection,n_coda,n_prelude,l_eff,s,r\n"
      "x,3.0,1e9,1e18,,full,none,2,2,20,10,1\n");
  const auto runs = load_runs(in, RunFormat::delimited);
  REQUIRE(runs.size() == 1);
  CHECK(runs[0].shape.s == 10);
  CHECK(runs[0].val_loss == 3.0);
}

TEST_CASE("truncated runs without a window use ceil(r/2)") {
  const auto runs = parse_csv("8,10,20,2,2,linear,trunc,,1e18,1e9,3.0,t\n");
  CHECK(runs[0].recipe.r_bwd == 4);
}

TEST_CASE("empty input is an empty list") {
  std::istringstream empty("");
  CHECK(load_runs(empty, RunFormat::delimited).empty());
  std::istringstream header_only(kHeader);
  CHECK(load_runs(header_only, RunFormat::delimited).empty());
  std::istringstream empty_json("");
  CHECK(load_runs(empty_json, RunFormat::structured).empty());
}

TEST_CASE("parse errors name the row and field") {
  try {
    parse_csv("1,10,20,2,2,none,full,,1e18,1e9,3.0,a\n1,10,20,2,2,none,full,,1e18,abc,3.0,b\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.row() == 2);
    CHECK(e.field() == "tokens");
  }
  CHECK_THROWS_AS(parse_csv("1,10,20,2,2,none,full,,1e18,1e9\n"), ParseError);
  CHECK_THROWS_AS(parse_csv("1,10,20,2,2,none,sideways,,1e18,1e9,3.0,a\n"), ParseError);
  CHECK_THROWS_AS(parse_csv("4,10,20,2,2,gated,full,,1e18,1e9,3.0,a\n"), ParseError);
  std::istringstream missing("r,s\n1,10\n");
  CHECK_THROWS_AS(load_runs(missing, RunFormat::delimited), ParseError);
}

TEST_CASE("invariant violations list every bad row") {
  try {
    parse_csv(
        "1,10,20,2,2,none,full,,1e18,1e9,0,a\n"
        "1,10,20,2,2,none,full,,1e18,1e9,3.0,b\n"
        "1,10,20,2,2,none,full,,1e18,1e9,-2,c\n");
    FAIL("expected a validation error");
  } catch (const ParseError&) {
    FAIL("wrong error type");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 1") != std::string::npos);
    CHECK(msg.find("row 3") != std::string::npos);
    CHECK(msg.find("row 2") == std::string::npos);
  }
  // Shape invariants are record invariants too.
  CHECK_THROWS_AS(parse_csv("3,10,20,2,2,linear,full,,1e18,1e9,3.0,a\n"), ValidationError);
  CHECK_THROWS_AS(parse_csv("1,10,20,2,2,none,trunc,1,1e18,1e9,3.0,a\n"), ValidationError);
}

TEST_CASE("optional budget consistency check") {
  const double tokens = tokens_for_budget(1e18, ModelShape::baseline(10), TrainingRecipe::full(),
                                          FlopsConvention::empirical);
  LoadOptions opts;
  opts.budget_check = FlopsConvention::empirical;
  char row[256];
  std::snprintf(row, sizeof row, "1,10,20,2,2,none,full,,1e18,%.17g,3.0,a\n", tokens * 1.01);
  CHECK(parse_csv(row, opts).size() == 1);
  std::snprintf(row, sizeof row, "1,10,20,2,2,none,full,,1e18,%.17g,3.0,a\n", tokens * 1.05);
  CHECK_THROWS_AS(parse_csv(row, opts), ValidationError);
  CHECK(parse_csv(row).size() == 1);
}

TEST_CASE("structured runs") {
  std::istringstream list(R"([{"r": 4, "s": 10, "l_eff": 20, "n_prelude": 2, "n_coda": 2,
    "injection": "linear", "bptt": "full", "r_bwd": null, "budget_flops": 1e18,
    "tokens": 9.5e8, "val_loss": 3.0, "variant": "baseline"}])");
  const auto runs = load_runs(list, RunFormat::structured);
  REQUIRE(runs.size() == 1);
  CHECK(runs[0].shape == ModelShape::looped(10, 4));

  std::istringstream wrapped(R"({"runs": [{"r": 1, "s": 6, "l_eff": 20, "n_prelude": 2, "n_coda": 2,
    "injection": "none", "bptt": "full", "budget_flops": 1e18, "tokens": 2e9, "val_loss": 3.2}]})");
  CHECK(load_runs(wrapped, RunFormat::structured).size() == 1);

  std::istringstream bad(R"([{"r": 1}])");
  CHECK_THROWS_AS(load_runs(bad, RunFormat::structured), ParseError);
  std::istringstream garbage("{not json");
  CHECK_THROWS_AS(load_runs(garbage, RunFormat::structured), ParseError);
  CHECK(format_for_path("runs.json") == RunFormat::structured);
  CHECK(format_for_path("runs.csv") == RunFormat::delimited);
}

TEST_CASE("written runs read back bit for bit") {
  GridOptions opts = reference_grid_options();
  opts.bptt = BpttMode::truncated;
  const auto runs = synthesize_runs(plan_grid(opts), SyntheticSpec{truth(), 0.01, 3, "probe"});
  std::stringstream buf;
  write_runs(buf, runs);
  const auto back = load_runs(buf, RunFormat::delimited);
  REQUIRE(back.size() == runs.size());
  for (std::size_t i = 0; i < runs.size(); ++i) {
    CHECK(back[i].shape == runs[i].shape);
    CHECK(back[i].recipe == runs[i].recipe);
    CHECK(back[i].budget == runs[i].budget);
    CHECK(back[i].tokens == runs[i].tokens);
    CHECK(back[i].val_loss == runs[i].val_loss);
    CHECK(back[i].variant == "probe");
  }
}

TEST_CASE("grid planning") {
  GridOptions one;
  one.budgets = {1e18};
  one.scales = {10};
  one.r_values = {1};
  const auto cells = plan_grid(one);
  REQUIRE(cells.size() == 1);
  CHECK(cells[0].n_params == 98'304'000);

  const auto reference = plan_grid(reference_grid_options());
  CHECK(reference.size() == 116);
  std::set<std::pair<int, double>> trained;
  for (const auto& c : reference) trained.insert({c.shape.s, c.budget});
  CHECK(trained.size() == 29);

  // The trained cells are exactly the published nonempty token cells.
  for (const auto& row : oracle::published_grid()) {
    for (std::size_t b = 0; b < oracle::kBudgets.size(); ++b) {
      CHECK(reference_cell_trained(row.s, oracle::kBudgets[b]) == (row.tokens_b[b] > 0));
    }
  }

  GridOptions filtered = reference_grid_options();
  filtered.keep = nullptr;
  filtered.min_tokens = 1e9;
  filtered.max_tokens = 3e9;
  for (const auto& c : plan_grid(filtered)) {
    CHECK(c.tokens >= 1e9);
    CHECK(c.tokens <= 3e9);
  }
}

TEST_CASE("synthesis") {
  const auto grid = plan_grid(reference_grid_options());

  // With both power-law terms masked out (tiny amplitudes) every loss is E.
  JointParams flat = truth();
  flat.law.a = -700.0;
  flat.law.b = -700.0;
  for (const auto& run : synthesize_runs(grid, SyntheticSpec{flat, 0.0, 1})) {
    CHECK(run.val_loss == doctest::Approx(oracle::kTruthE).epsilon(1e-14));
  }

  const auto a = synthesize_runs(grid, SyntheticSpec{truth(), 0.003, 99});
  const auto b = synthesize_runs(grid, SyntheticSpec{truth(), 0.003, 99});
  const auto c = synthesize_runs(grid, SyntheticSpec{truth(), 0.003, 100});
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].val_loss == b[i].val_loss);
    differs = differs || a[i].val_loss != c[i].val_loss;
  }
  CHECK(differs);

  // Noise is log-normal with the requested sigma.
  const auto clean = synthesize_runs(grid, SyntheticSpec{truth(), 0.0, 0});
  double sum = 0.0, sum2 = 0.0;
  std::vector<GridCell> many;
  for (int k = 0; k < 100; ++k) many.insert(many.end(), grid.begin(), grid.end());
  const auto noisy = synthesize_runs(many, SyntheticSpec{truth(), 0.05, 5});
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    const double z = std::log(noisy[i].val_loss / clean[i % clean.size()].val_loss);
    sum += z;
    sum2 += z * z;
  }
  const double n = static_cast<double>(noisy.size());
  CHECK(std::abs(sum / n) < 0.003);
  CHECK(std::sqrt(sum2 / n) == doctest::Approx(0.05).epsilon(0.03));

  // The best run per budget improves with compute.
  double previous = 1e9;
  for (double budget : reference_budgets()) {
    double best = 1e9;
    for (const auto& run : clean) {
      if (run.budget == budget) best = std::min(best, run.val_loss);
    }
    CHECK(best < previous);
    previous = best;
  }
}

TEST_CASE("cells") {
  const auto runs = synthesize_runs(plan_grid(reference_grid_options()), SyntheticSpec{truth(), 0.0, 0});
  const auto cells = group_cells(runs);
  CHECK(cells.size() == 24);
  std::vector<int> seen(runs.size(), 0);
  for (const auto& cell : cells) {
    for (std::size_t i : cell.members) {
      ++seen[i];
      CHECK(runs[i].shape.r == cell.r);
      CHECK(budget_key(runs[i].budget) == cell.budget);
    }
  }
  for (int count : seen) CHECK(count == 1);

  CHECK(group_cells({runs.front()}).size() == 1);

  // Width is not part of the key, and float noise below 3 s.f. is absorbed.
  RunRecord x = runs.front();
  RunRecord y = x;
  y.shape.s += 2;
  y.budget = x.budget * (1 + 1e-9);
  CHECK(group_cells({x, y}).size() == 1);
  CHECK(budget_key(2.149999999e18) == 2.15e18);
}
