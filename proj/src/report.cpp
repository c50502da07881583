#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "emgtl/errors.hpp"
#include "emgtl/harness.hpp"
#include "emgtl/stats.hpp"

namespace emgtl {

using nlohmann::json;

namespace {

json stat_json(const StatResult& r) {
  return {{"test", "wilcoxon_one_tail"}, {"statistic", r.statistic}, {"p_value", r.p_value},
          {"reject_h0", r.reject_h0},    {"n", r.n},                 {"exact", r.exact},
          {"degenerate", r.degenerate},  {"small_sample", r.small_sample}};
}

json friedman_json(const FriedmanResult& r, const std::vector<std::string>& methods) {
  json cmp = json::array();
  for (std::size_t i = 0; i < r.compared.size(); ++i)
    cmp.push_back({{"method", methods[r.compared[i]]},
                   {"z", r.z[i]},
                   {"p_raw", r.p_raw[i]},
                   {"p_holm", r.p_holm[i]},
                   {"reject_h0", static_cast<bool>(r.reject_holm[i])}});
  return {{"test", "friedman_holm"},  {"mean_ranks", r.mean_ranks}, {"chi_square", r.chi_square},
          {"p_value", r.p_value},     {"reject_h0", r.reject_h0},   {"best", methods[r.best]},
          {"comparisons", cmp}};
}

}  // namespace

ComparisonReport emit_report(const std::vector<RunReport>& reports) {
  if (reports.empty()) throw ConfigError("report needs at least one run report");
  ComparisonReport out;
  // per column: subject -> mean over seeds
  std::vector<std::map<int, double>> columns;
  for (const auto& rep : reports) {
    for (const auto& m : rep.methods) {
      const std::string name = m.method + "@" + std::to_string(rep.cycles);
      if (std::find(out.methods.begin(), out.methods.end(), name) != out.methods.end())
        throw ConfigError("method '" + name + "' appears in more than one report");
      if (m.accuracy.size() != rep.subjects.size())
        throw DataError("report for '" + name + "' has " + std::to_string(m.accuracy.size()) + " rows for " +
                        std::to_string(rep.subjects.size()) + " subjects");
      std::map<int, double> col;
      for (std::size_t s = 0; s < rep.subjects.size(); ++s) {
        const auto& row = m.accuracy[s];
        if (row.empty()) throw DataError("report for '" + name + "' has an empty accuracy row");
        col[rep.subjects[s]] = std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(row.size());
      }
      out.methods.push_back(name);
      columns.push_back(std::move(col));
    }
  }
  for (const auto& [subject, v] : columns.front()) {
    (void)v;
    if (std::all_of(columns.begin(), columns.end(), [&](const auto& c) { return c.count(subject) > 0; }))
      out.subjects.push_back(subject);
  }
  if (out.subjects.empty()) throw DataError("reports share no subject");
  for (int subject : out.subjects) {
    std::vector<double> row;
    for (const auto& c : columns) row.push_back(c.at(subject));
    out.table.push_back(std::move(row));
  }
  out.means.assign(out.methods.size(), 0.0);
  for (const auto& row : out.table)
    for (std::size_t m = 0; m < row.size(); ++m) out.means[m] += row[m] / static_cast<double>(out.table.size());

  if (out.methods.size() == 2) {
    std::vector<double> a, b;
    for (const auto& row : out.table) {
      a.push_back(row[0]);
      b.push_back(row[1]);
    }
    out.tests = stat_json(wilcoxon_one_tail(a, b));
    out.tests["hypothesis"] = out.methods[0] + " > " + out.methods[1];
  } else if (out.methods.size() > 2 && out.subjects.size() >= 2) {
    out.tests = friedman_json(friedman_holm(out.table), out.methods);
  }
  return out;
}

void write_comparison(const ComparisonReport& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ostringstream csv;
  csv.precision(10);
  csv << "subject";
  for (const auto& m : report.methods) csv << ',' << m;
  csv << '\n';
  for (std::size_t s = 0; s < report.subjects.size(); ++s) {
    csv << report.subjects[s];
    for (double v : report.table[s]) csv << ',' << v;
    csv << '\n';
  }
  csv << "mean";
  for (double v : report.means) csv << ',' << v;
  csv << '\n';
  std::ofstream(out_dir / "comparison.csv") << csv.str();

  const json doc = {{"methods", report.methods}, {"subjects", report.subjects}, {"table", report.table},
                    {"means", report.means},     {"tests", report.tests}};
  std::ofstream(out_dir / "comparison.json") << doc.dump(2) << '\n';
}

}  // namespace emgtl
