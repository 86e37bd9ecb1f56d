#include "loopscale/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string_view>
#include <utility>

#include <json.hpp>

#include "loopscale/errors.hpp"
#include "loopscale/rng.hpp"

namespace loopscale {

namespace {

using Json = nlohmann::json;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.emplace_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return fields;
}

double parse_real(std::size_t row, const std::string& field, std::string_view text) {
  double value = 0.0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc() || end != text.data() + text.size()) {
    throw ParseError(row, field, "expected a number, got '" + std::string(text) + "'");
  }
  return value;
}

int parse_int(std::size_t row, const std::string& field, std::string_view text) {
  int value = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc() || end != text.data() + text.size()) {
    throw ParseError(row, field, "expected an integer, got '" + std::string(text) + "'");
  }
  return value;
}

// Field accessor shared by both formats; values arrive as text.
using FieldGetter = std::function<std::optional<std::string>(const std::string&)>;

RunRecord record_from_fields(std::size_t row, const FieldGetter& get) {
  auto required = [&](const std::string& name) {
    auto v = get(name);
    if (!v) throw ParseError(row, name, "missing");
    return *v;
  };
  RunRecord rec;
  rec.shape.r = parse_int(row, "r", required("r"));
  rec.shape.s = parse_int(row, "s", required("s"));
  rec.shape.l_eff = parse_int(row, "l_eff", required("l_eff"));
  rec.shape.n_prelude = parse_int(row, "n_prelude", required("n_prelude"));
  rec.shape.n_coda = parse_int(row, "n_coda", required("n_coda"));
  try {
    rec.shape.injection = Injection::parse(required("injection"));
  } catch (const ShapeError& e) {
    throw ParseError(row, "injection", e.what());
  }
  const std::string bptt = required("bptt");
  const std::string r_bwd = get("r_bwd").value_or("");
  if (bptt == "full") {
    if (!r_bwd.empty()) throw ParseError(row, "r_bwd", "must be empty for full BPTT");
    rec.recipe = TrainingRecipe::full();
  } else if (bptt == "trunc") {
    rec.recipe = r_bwd.empty() ? TrainingRecipe::truncated_default(rec.shape.r)
                               : TrainingRecipe::truncated(parse_int(row, "r_bwd", r_bwd));
  } else {
    throw ParseError(row, "bptt", "expected full or trunc, got '" + bptt + "'");
  }
  rec.budget = parse_real(row, "budget_flops", required("budget_flops"));
  rec.tokens = parse_real(row, "tokens", required("tokens"));
  rec.val_loss = parse_real(row, "val_loss", required("val_loss"));
  rec.variant = get("variant").value_or("");
  return rec;
}

std::vector<RunRecord> parse_delimited(std::istream& in) {
  std::vector<RunRecord> runs;
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) {
      header = split_commas(line);
      break;
    }
  }
  if (header.empty()) return runs;
  std::map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) column[header[i]] = i;
  for (const char* name : kRunColumns) {
    if (!column.contains(name)) throw ParseError(0, name, "column missing from header");
  }
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const std::vector<std::string> fields = split_commas(line);
    if (fields.size() != header.size()) {
      throw ParseError(row, "*", "expected " + std::to_string(header.size()) + " fields, got " +
                                     std::to_string(fields.size()));
    }
    runs.push_back(record_from_fields(row, [&](const std::string& name) -> std::optional<std::string> {
      const auto it = column.find(name);
      if (it == column.end()) return std::nullopt;
      return fields[it->second];
    }));
  }
  return runs;
}

std::string json_field_text(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number()) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v.get<double>());
    return buf;
  }
  if (v.is_null()) return "";
  return v.dump();
}

std::vector<RunRecord> parse_structured(std::istream& in) {
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (trim(text).empty()) return {};
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ParseError(0, "*", std::string("malformed structured input: ") + e.what());
  }
  const Json& list = doc.is_object() && doc.contains("runs") ? doc["runs"] : doc;
  if (!list.is_array()) throw ParseError(0, "runs", "expected a list of run objects");
  std::vector<RunRecord> runs;
  std::size_t row = 0;
  for (const Json& item : list) {
    ++row;
    if (!item.is_object()) throw ParseError(row, "*", "expected an object");
    runs.push_back(record_from_fields(row, [&](const std::string& name) -> std::optional<std::string> {
      if (!item.contains(name)) return std::nullopt;
      return json_field_text(item[name]);
    }));
  }
  return runs;
}

std::string format_real(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

void RunRecord::validate() const {
  auto positive = [](double x) { return x > 0.0 && std::isfinite(x); };
  if (!positive(val_loss)) throw ValidationError("validation loss must be positive and finite");
  if (!positive(tokens)) throw ValidationError("token count must be positive and finite");
  if (!positive(budget)) throw ValidationError("compute budget must be positive and finite");
  shape.validate();
  recipe.validate_for(shape);
}

double RunRecord::budget_mismatch(FlopsConvention conv) const {
  return std::abs(tokens * train_flops_per_token(shape, recipe, conv) - budget) / budget;
}

Observation RunRecord::observation() const {
  const ParamSplit split = param_split(shape);
  return Observation::make(split.once, split.recurrent, shape.r, tokens, val_loss);
}

std::vector<RunRecord> load_runs(std::istream& in, RunFormat format, const LoadOptions& options) {
  std::vector<RunRecord> runs =
      format == RunFormat::delimited ? parse_delimited(in) : parse_structured(in);
  std::string problems;
  std::size_t bad = 0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    std::string why;
    try {
      runs[i].validate();
      if (options.budget_check) {
        const double mismatch = runs[i].budget_mismatch(*options.budget_check);
        if (mismatch > options.budget_tolerance) {
          why = "tokens x FLOPs/token misses the budget by " + format_real(mismatch * 100.0) + "%";
        }
      }
    } catch (const ValidationError& e) {
      why = e.what();
    }
    if (!why.empty()) {
      ++bad;
      problems += "\n  row " + std::to_string(i + 1) + ": " + why;
    }
  }
  if (bad > 0) {
    throw ValidationError(std::to_string(bad) + " invalid run record(s):" + problems);
  }
  return runs;
}

RunFormat format_for_path(const std::string& path) {
  const auto dot = path.rfind('.');
  if (dot != std::string::npos && path.substr(dot) == ".json") return RunFormat::structured;
  return RunFormat::delimited;
}

std::vector<RunRecord> load_runs_file(const std::string& path, const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open run file '" + path + "'");
  return load_runs(in, format_for_path(path), options);
}

void write_runs(std::ostream& out, const std::vector<RunRecord>& runs) {
  for (std::size_t i = 0; i < std::size(kRunColumns); ++i) {
    out << (i ? "," : "") << kRunColumns[i];
  }
  out << '\n';
  for (const RunRecord& run : runs) {
    const bool trunc = run.recipe.bptt == BpttMode::truncated;
    out << run.shape.r << ',' << run.shape.s << ',' << run.shape.l_eff << ',' << run.shape.n_prelude
        << ',' << run.shape.n_coda << ',' << run.shape.injection.to_string() << ','
        << to_string(run.recipe.bptt) << ',' << (trunc ? std::to_string(run.recipe.r_bwd) : "")
        << ',' << format_real(run.budget) << ',' << format_real(run.tokens) << ','
        << format_real(run.val_loss) << ',' << run.variant << '\n';
  }
}

std::vector<GridCell> plan_grid(const GridOptions& options) {
  std::vector<GridCell> cells;
  for (double budget : options.budgets) {
    if (!(budget > 0.0)) throw DomainError("grid budgets must be positive");
    for (int s : options.scales) {
      if (options.keep && !options.keep(s, budget)) continue;
      for (int r : options.r_values) {
        GridCell cell;
        cell.shape = ModelShape::looped(s, r, options.injection);
        if (options.bptt == BpttMode::truncated && r > 1) {
          cell.recipe = options.r_bwd > 0 ? TrainingRecipe::truncated(std::min(options.r_bwd, r))
                                          : TrainingRecipe::truncated_default(r);
        }
        cell.budget = budget;
        cell.n_params = unique_params(cell.shape, options.counting);
        cell.tokens = tokens_for_budget(budget, cell.shape, cell.recipe, options.convention);
        if (options.min_tokens && cell.tokens < *options.min_tokens) continue;
        if (options.max_tokens && cell.tokens > *options.max_tokens) continue;
        cells.push_back(cell);
      }
    }
  }
  return cells;
}

std::vector<double> reference_budgets() { return {4.64e17, 1e18, 2.15e18, 4.64e18, 1e19, 2.15e19}; }

std::vector<int> reference_scales() { return {6, 8, 10, 12, 14, 16, 18, 20, 24, 28, 34}; }

bool reference_cell_trained(int s, double budget) {
  // Trained widths per budget, smallest budget first.
  static const std::map<double, std::vector<int>> trained = {
      {4.64e17, {6, 8, 10, 12}},
      {1e18, {6, 8, 10, 12, 14}},
      {2.15e18, {8, 10, 12, 14, 16}},
      {4.64e18, {10, 12, 14, 16, 18, 20}},
      {1e19, {12, 16, 18, 20, 24}},
      {2.15e19, {18, 24, 28, 34}},
  };
  const auto it = trained.find(budget_key(budget));
  if (it == trained.end()) return false;
  return std::find(it->second.begin(), it->second.end(), s) != it->second.end();
}

GridOptions reference_grid_options() {
  GridOptions options;
  options.budgets = reference_budgets();
  options.scales = reference_scales();
  options.r_values = {1, 2, 4, 8};
  options.keep = reference_cell_trained;
  return options;
}

std::vector<RunRecord> synthesize_runs(const std::vector<GridCell>& grid, const SyntheticSpec& spec) {
  if (grid.empty()) throw UsageError("synthesis needs a non-empty grid");
  if (!(spec.noise_sigma >= 0.0)) throw UsageError("noise sigma must be >= 0");
  Rng rng(derive_seed(spec.seed, kNoiseStream));
  std::vector<RunRecord> runs;
  runs.reserve(grid.size());
  for (const GridCell& cell : grid) {
    const ParamSplit split = param_split(cell.shape);
    const double clean = predict_loss(
        spec.truth, LawInputs{split.once, split.recurrent, static_cast<double>(cell.shape.r), cell.tokens});
    const double z = rng.normal();
    RunRecord run;
    run.shape = cell.shape;
    run.recipe = cell.recipe;
    run.budget = cell.budget;
    run.tokens = cell.tokens;
    run.val_loss = spec.noise_sigma == 0.0 ? clean : clean * std::exp(spec.noise_sigma * z);
    run.variant = spec.variant;
    runs.push_back(std::move(run));
  }
  return runs;
}

double budget_key(double budget) {
  if (!(budget > 0.0) || !std::isfinite(budget)) return budget;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", budget);
  return std::strtod(buf, nullptr);
}

std::vector<Cell> group_cells(const std::vector<RunRecord>& runs) {
  std::map<std::pair<double, int>, std::vector<std::size_t>> by_key;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    by_key[{budget_key(runs[i].budget), runs[i].shape.r}].push_back(i);
  }
  std::vector<Cell> cells;
  cells.reserve(by_key.size());
  for (auto& [key, members] : by_key) cells.push_back({key.first, key.second, std::move(members)});
  return cells;
}

}  // namespace loopscale
