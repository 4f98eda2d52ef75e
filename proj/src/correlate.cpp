#include "manifold_probe/correlate.hpp"

#include "manifold_probe/common.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace manifold_probe {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) {
    fields.push_back(trim(field));
  }
  if (!line.empty() && line.back() == ',') {
    fields.emplace_back();
  }
  return fields;
}

struct CsvTable {
  std::filesystem::path path;
  std::map<std::string, std::size_t> columns;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;

  std::size_t column(const std::string& name) const {
    const auto it = columns.find(name);
    if (it == columns.end()) {
      throw DataError(path.string() + ": missing column '" + name + "'");
    }
    return it->second;
  }

  double number(std::size_t row, std::size_t col) const {
    const std::string& text = rows[row][col];
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || ec != std::errc() || ptr != text.data() + text.size() ||
        !std::isfinite(value)) {
      throw DataError(path.string() + ":" + std::to_string(line_numbers[row]) +
                      ": not a finite number: '" + text + "'");
    }
    return value;
  }
};

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw EnvironmentError("cannot open " + path.string());
  }
  CsvTable table;
  table.path = path;
  std::string line;
  std::size_t line_number = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) {
      continue;
    }
    auto fields = split(line);
    if (!have_header) {
      for (std::size_t i = 0; i < fields.size(); ++i) {
        table.columns.emplace(fields[i], i);
      }
      have_header = true;
      continue;
    }
    if (fields.size() != table.columns.size()) {
      throw DataError(path.string() + ":" + std::to_string(line_number) + ": expected " +
                      std::to_string(table.columns.size()) + " fields, got " +
                      std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
    table.line_numbers.push_back(line_number);
  }
  if (!have_header) {
    throw DataError(path.string() + ": empty file");
  }
  return table;
}

}  // namespace

std::vector<ModelScores> read_model_scores(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t id = t.column("model_id");
  const std::size_t d = t.column("d_stim");
  const std::size_t v = t.column("volume");
  const std::size_t h = t.column("h_score");
  std::vector<ModelScores> out;
  std::set<std::string> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    ModelScores m{t.rows[r][id], t.number(r, d), t.number(r, v), t.number(r, h)};
    if (!seen.insert(m.model_id).second) {
      throw DataError(path.string() + ": duplicate model_id '" + m.model_id + "'");
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<BenchmarkScore> read_benchmark_scores(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t id = t.column("model_id");
  const std::size_t b = t.column("benchmark");
  const std::size_t s = t.column("score");
  std::vector<BenchmarkScore> out;
  std::set<std::pair<std::string, std::string>> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    BenchmarkScore score{t.rows[r][id], t.rows[r][b], t.number(r, s)};
    if (!seen.emplace(score.model_id, score.benchmark).second) {
      throw DataError(path.string() + ": duplicate score for model '" + score.model_id +
                      "' on benchmark '" + score.benchmark + "'");
    }
    out.push_back(std::move(score));
  }
  return out;
}

std::string_view to_string(Predictor p) {
  switch (p) {
    case Predictor::id_only:
      return "id_only";
    case Predictor::id_volume:
      return "id_volume";
    case Predictor::full:
      return "h_score";
  }
  return "unknown";
}

std::string_view formula(Predictor p) {
  switch (p) {
    case Predictor::id_only:
      return "exp(-epsilon*d_stim)";
    case Predictor::id_volume:
      return "volume/exp(epsilon*d_stim)";
    case Predictor::full:
      return "log(d_world)*volume/exp(epsilon*d_stim)";
  }
  return "";
}

double predictor_value(const ModelScores& m, Predictor p, double epsilon) {
  switch (p) {
    case Predictor::id_only:
      return std::exp(-epsilon * m.d_stim);
    case Predictor::id_volume:
      return m.volume / std::exp(epsilon * m.d_stim);
    case Predictor::full:
      return m.h_score;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

std::vector<CorrelationRow> correlate(const std::vector<ModelScores>& scores,
                                      const std::vector<BenchmarkScore>& external, double epsilon,
                                      const BootstrapOptions& options) {
  std::map<std::string, const ModelScores*> by_model;
  for (const auto& m : scores) {
    by_model.emplace(m.model_id, &m);
  }
  // benchmark -> model -> score, both sorted
  std::map<std::string, std::map<std::string, double>> benchmarks;
  for (const auto& s : external) {
    benchmarks[s.benchmark][s.model_id] = s.score;
  }
  if (benchmarks.empty()) {
    throw DataError("no benchmark scores");
  }

  std::vector<CorrelationRow> rows;
  for (const auto& [name, per_model] : benchmarks) {
    std::vector<const ModelScores*> models;
    std::vector<double> y;
    for (const auto& [model, score] : per_model) {
      if (const auto it = by_model.find(model); it != by_model.end()) {
        models.push_back(it->second);
        y.push_back(score);
      }
    }
    if (models.size() < 2) {
      throw DataError("benchmark '" + name + "': fewer than 2 shared models (" +
                      std::to_string(models.size()) + ")");
    }
    for (const Predictor p : kPredictors) {
      std::vector<double> x;
      for (const auto* m : models) {
        x.push_back(predictor_value(*m, p, epsilon));
      }
      CorrelationRow row;
      row.benchmark = name;
      row.predictor = p;
      for (const auto* m : models) {
        row.models.push_back(m->model_id);
      }
      row.correlation = spearman(x, y);
      row.ci = bootstrap_indices(
          models.size(), row.correlation.rho,
          [&](std::span<const std::size_t> idx) {
            std::vector<double> xs;
            std::vector<double> ys;
            for (const std::size_t i : idx) {
              xs.push_back(x[i]);
              ys.push_back(y[i]);
            }
            try {
              return spearman(xs, ys).rho;
            } catch (const DataError&) {
              return std::numeric_limits<double>::quiet_NaN();
            }
          },
          options);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace manifold_probe
