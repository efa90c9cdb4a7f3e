#include <cmath>
#include <fstream>

#include "json.hpp"

#include "smelu/error.hpp"
#include "smelu/harness.hpp"
#include "smelu/text.hpp"

namespace smelu {
namespace {

using Header = std::vector<std::pair<std::string, std::string>>;
using Json = nlohmann::ordered_json;
using text::format_double;

std::string header_comment(const Header& header) {
  std::string out;
  for (const auto& [k, v] : header) out += "# " + k + ": " + v + "\n";
  return out;
}

Json header_json(const Header& header) {
  Json h = Json::object();
  for (const auto& [k, v] : header) h[k] = v;
  return h;
}

Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  out.close();
  if (!out) throw IoError("write failed for " + path.string());
}

std::string pct(double fraction) { return format_double(100.0 * fraction); }

std::vector<double> column(const EnsembleReport& r, double (*get)(const EnsembleRow&)) {
  std::vector<double> v;
  for (const auto& row : r.rows) v.push_back(get(row));
  return v;
}

double single_loss(const EnsembleRow& r) {
  return 0.5 * (r.single_first.progressive.log_loss + r.single_second.progressive.log_loss);
}
double ensemble_loss(const EnsembleRow& r) {
  return 0.5 * (r.ensemble_first.progressive.log_loss + r.ensemble_second.progressive.log_loss);
}
double single_pqauc(const EnsembleRow& r) {
  return 0.5 * (r.single_first.progressive.pqauc + r.single_second.progressive.pqauc);
}
double ensemble_pqauc(const EnsembleRow& r) {
  return 0.5 * (r.ensemble_first.progressive.pqauc + r.ensemble_second.progressive.pqauc);
}
double single_pd(const EnsembleRow& r) { return r.single_pd; }
double ensemble_pd(const EnsembleRow& r) { return r.ensemble_pd; }

struct Summary {
  const char* name;
  double (*get)(const EnsembleRow&);
  double scale;
};

constexpr Summary kEnsembleColumns[] = {
    {"single_logloss", single_loss, 1.0},     {"single_pqauc", single_pqauc, 1.0},
    {"single_pd_pct", single_pd, 100.0},      {"ensemble_logloss", ensemble_loss, 1.0},
    {"ensemble_pqauc", ensemble_pqauc, 1.0},  {"ensemble_pd_pct", ensemble_pd, 100.0},
};

}  // namespace

MeanCi mean_ci(std::span<const double> values) {
  MeanCi out;
  if (values.empty()) return {std::nan(""), std::nan("")};
  const double n = static_cast<double>(values.size());
  for (double v : values) out.mean += v;
  out.mean /= n;
  if (values.size() < 2) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.half_width = 1.96 * std::sqrt(ss / (n - 1.0) / n);
  return out;
}

std::string to_csv(const Report& report) {
  std::string out = header_comment(report.header);
  out += kSweepCsvHeader;
  out += '\n';
  for (const auto& r : report.rows) {
    out += r.activation + ',' + r.params + ',' + std::to_string(r.rep) + ',' +
           format_double(r.log_loss) + ',' + format_double(r.auc) + ',' +
           format_double(r.pqauc) + ',' + pct(r.pd) + ',' + format_double(r.d_log_loss_pct) +
           ',' + format_double(r.d_pqauc_pct) + '\n';
  }
  return out;
}

std::string to_json(const Report& report) {
  Json j;
  j["header"] = header_json(report.header);
  Json rows = Json::array();
  for (const auto& r : report.rows) {
    Json row;
    row["activation"] = r.activation;
    row["params"] = r.params;
    row["rep"] = r.rep;
    row["logloss"] = number(r.log_loss);
    row["auc"] = number(r.auc);
    row["pqauc"] = number(r.pqauc);
    row["pd_pct"] = number(100.0 * r.pd);
    row["d_logloss_pct"] = number(r.d_log_loss_pct);
    row["d_pqauc_pct"] = number(r.d_pqauc_pct);
    if (!r.error.empty()) row["error"] = r.error;
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  return j.dump(2) + "\n";
}

std::string to_csv(const EnsembleReport& report) {
  std::string out = header_comment(report.header);
  for (const auto& c : kEnsembleColumns) {
    std::vector<double> v = column(report, c.get);
    for (auto& x : v) x *= c.scale;
    const MeanCi ci = mean_ci(v);
    out += std::string("# mean ") + c.name + ": " + format_double(ci.mean) + " +/- " +
           format_double(ci.half_width) + "\n";
  }
  out += "rep";
  for (const auto& c : kEnsembleColumns) out += std::string(",") + c.name;
  out += '\n';
  for (const auto& r : report.rows) {
    out += std::to_string(r.rep);
    for (const auto& c : kEnsembleColumns) out += ',' + format_double(c.scale * c.get(r));
    out += '\n';
  }
  return out;
}

std::string to_json(const EnsembleReport& report) {
  Json j;
  j["header"] = header_json(report.header);
  Json summary = Json::object();
  for (const auto& c : kEnsembleColumns) {
    std::vector<double> v = column(report, c.get);
    for (auto& x : v) x *= c.scale;
    const MeanCi ci = mean_ci(v);
    summary[c.name] = {{"mean", number(ci.mean)}, {"ci95", number(ci.half_width)}};
  }
  j["summary"] = std::move(summary);
  Json rows = Json::array();
  for (const auto& r : report.rows) {
    Json row;
    row["rep"] = r.rep;
    for (const auto& c : kEnsembleColumns) row[c.name] = number(c.scale * c.get(r));
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  return j.dump(2) + "\n";
}

std::string to_csv(const LandscapeSample& sample, const Header& header) {
  Header h = header;
  h.emplace_back("network", sample.network);
  h.emplace_back("seed", std::to_string(sample.seed));
  h.emplace_back("loss", sample.loss_kind + (sample.loss_kind == "logistic" ? " p1=" : " target=") +
                             format_double(sample.loss_param));
  std::string out = header_comment(h);
  if (sample.dims == 1) {
    out += "x1,loss\n";
    for (std::size_t i = 0; i < sample.x1.size(); ++i) {
      out += format_double(sample.x1[i]) + ',' + format_double(sample.loss[i]) + '\n';
    }
  } else {
    out += "x1,x2,loss\n";
    const std::size_t nx = sample.x1.size();
    for (std::size_t j = 0; j < sample.x2.size(); ++j) {
      for (std::size_t i = 0; i < nx; ++i) {
        out += format_double(sample.x1[i]) + ',' + format_double(sample.x2[j]) + ',' +
               format_double(sample.loss[j * nx + i]) + '\n';
      }
    }
  }
  return out;
}

void emit(const Report& report, const std::filesystem::path& path, EmitFormat format) {
  write_file(path, format == EmitFormat::Csv ? to_csv(report) : to_json(report));
}

void emit(const LandscapeSample& sample, const std::filesystem::path& path, const Header& header) {
  write_file(path, to_csv(sample, header));
}

void emit(const EnsembleReport& report, const std::filesystem::path& path, EmitFormat format) {
  write_file(path, format == EmitFormat::Csv ? to_csv(report) : to_json(report));
}

}  // namespace smelu
