#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "preflearn/harness.hpp"

namespace preflearn {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::ofstream open_or_throw(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("emit_report: cannot open " + p.string());
  return out;
}

void write_trials_csv(const SweepResult& sweep, const std::filesystem::path& path) {
  std::ofstream out = open_or_throw(path);
  out << "method,n,beta,seed,forward_kl,reverse_kl,train_objective,wall_time\n";
  for (const TrialResult& t : sweep.trials)
    out << to_string(t.method) << ',' << t.n << ',' << fmt_double(t.beta) << ',' << t.seed
        << ',' << fmt_double(t.forward_kl) << ',' << fmt_double(t.reverse_kl) << ','
        << fmt_double(t.train_objective) << ',' << fmt_double(t.wall_time) << '\n';
  out.close();
  if (!out) throw std::runtime_error("emit_report: write failed for " + path.string());
}

void write_summary_json(const SweepResult& sweep, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["config"] = nlohmann::ordered_json::parse(sweep.config.to_json_string());
  j["num_trials"] = sweep.trials.size();
  j["best_beta"] = nlohmann::ordered_json::array();
  for (const BestBetaEntry& e : sweep.best_beta)
    j["best_beta"].push_back({{"method", to_string(e.method)},
                              {"n", e.n},
                              {"beta", e.beta},
                              {"mean_forward_kl", e.mean_forward_kl}});
  j["rate_fits"] = nlohmann::ordered_json::array();
  for (const MethodRateFit& f : sweep.rate_fits)
    j["rate_fits"].push_back({{"method", to_string(f.method)},
                              {"slope", f.fit.slope},
                              {"intercept", f.fit.intercept},
                              {"r_squared", f.fit.r_squared},
                              {"points_used", f.fit.points_used}});
  j["theory_checks"] = nlohmann::ordered_json::array();
  for (const CheckReport& r : sweep.check_reports)
    j["theory_checks"].push_back({{"name", r.name},
                                  {"instances_tested", r.instances_tested},
                                  {"violations", r.violations},
                                  {"worst_margin", r.worst_margin}});
  j["failures"] = nlohmann::ordered_json::array();
  for (const CellFailure& f : sweep.failures)
    j["failures"].push_back({{"method", to_string(f.method)},
                             {"n", f.n},
                             {"beta", f.beta},
                             {"seed", f.seed},
                             {"message", f.message}});
  std::ofstream out = open_or_throw(path);
  out << j.dump(2) << '\n';
  out.close();
  if (!out) throw std::runtime_error("emit_report: write failed for " + path.string());
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b"};

std::string n_label(std::size_t n) {
  if (n > 0 && (n & (n - 1)) == 0) {
    int e = 0;
    for (std::size_t v = n; v > 1; v >>= 1) ++e;
    return "2^" + std::to_string(e);
  }
  return std::to_string(n);
}

void write_curves_svg(const SweepResult& sweep, const std::filesystem::path& path) {
  // Best-beta mean forward KL vs n, log-log, one polyline per method.
  struct Series {
    Method method;
    std::vector<std::pair<double, double>> pts;  // (n, mean), mean > 0
  };
  std::vector<Series> series;
  for (const BestBetaEntry& e : sweep.best_beta) {
    if (!(e.mean_forward_kl > 0.0)) continue;  // zero KL has no log position
    auto it = std::find_if(series.begin(), series.end(),
                           [&](const Series& s) { return s.method == e.method; });
    if (it == series.end()) {
      series.push_back(Series{e.method, {}});
      it = std::prev(series.end());
    }
    it->pts.emplace_back(static_cast<double>(e.n), e.mean_forward_kl);
  }

  double lx_min = 0.0, lx_max = 1.0;
  if (!sweep.config.n_values.empty()) {
    lx_min = std::log2(static_cast<double>(sweep.config.n_values.front()));
    lx_max = std::log2(static_cast<double>(sweep.config.n_values.back()));
    if (lx_max <= lx_min) lx_max = lx_min + 1.0;
  }
  double ly_min = -2.0, ly_max = 0.0;
  bool have_pts = false;
  for (const Series& s : series)
    for (const auto& [n, v] : s.pts) {
      double ly = std::log10(v);
      if (!have_pts) {
        ly_min = ly_max = ly;
        have_pts = true;
      } else {
        ly_min = std::min(ly_min, ly);
        ly_max = std::max(ly_max, ly);
      }
    }
  ly_min = std::floor(ly_min);
  ly_max = std::ceil(ly_max);
  if (ly_max <= ly_min) ly_max = ly_min + 1.0;

  const double px0 = 80, px1 = 560, py0 = 30, py1 = 440;
  auto sx = [&](double n) { return px0 + (std::log2(n) - lx_min) / (lx_max - lx_min) * (px1 - px0); };
  auto sy = [&](double v) {
    return py1 - (std::log10(v) - ly_min) / (ly_max - ly_min) * (py1 - py0);
  };

  std::ofstream out = open_or_throw(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"760\" height=\"500\" "
         "viewBox=\"0 0 760 500\">\n";
  out << "<rect x=\"0\" y=\"0\" width=\"760\" height=\"500\" fill=\"white\"/>\n";
  out << "<rect x=\"" << fmt_coord(px0) << "\" y=\"" << fmt_coord(py0) << "\" width=\""
      << fmt_coord(px1 - px0) << "\" height=\"" << fmt_coord(py1 - py0)
      << "\" fill=\"none\" stroke=\"#333333\"/>\n";

  for (std::size_t n : sweep.config.n_values) {
    double x = sx(static_cast<double>(n));
    out << "<line x1=\"" << fmt_coord(x) << "\" y1=\"" << fmt_coord(py1) << "\" x2=\""
        << fmt_coord(x) << "\" y2=\"" << fmt_coord(py1 + 5) << "\" stroke=\"#333333\"/>\n";
    out << "<text x=\"" << fmt_coord(x) << "\" y=\"" << fmt_coord(py1 + 18)
        << "\" font-size=\"10\" text-anchor=\"middle\" font-family=\"sans-serif\">"
        << n_label(n) << "</text>\n";
  }
  for (double e = ly_min; e <= ly_max + 0.5; e += 1.0) {
    double y = py1 - (e - ly_min) / (ly_max - ly_min) * (py1 - py0);
    out << "<line x1=\"" << fmt_coord(px0) << "\" y1=\"" << fmt_coord(y) << "\" x2=\""
        << fmt_coord(px1) << "\" y2=\"" << fmt_coord(y)
        << "\" stroke=\"#dddddd\" stroke-dasharray=\"3,3\"/>\n";
    out << "<text x=\"" << fmt_coord(px0 - 8) << "\" y=\"" << fmt_coord(y + 3)
        << "\" font-size=\"10\" text-anchor=\"end\" font-family=\"sans-serif\">1e"
        << static_cast<int>(e) << "</text>\n";
  }
  out << "<text x=\"" << fmt_coord((px0 + px1) / 2) << "\" y=\"475\" font-size=\"12\" "
         "text-anchor=\"middle\" font-family=\"sans-serif\">n (preference pairs)</text>\n";
  out << "<text x=\"20\" y=\"" << fmt_coord((py0 + py1) / 2)
      << "\" font-size=\"12\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "transform=\"rotate(-90 20 "
      << fmt_coord((py0 + py1) / 2) << ")\">forward KL</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % 6];
    std::string pts;
    for (const auto& [n, v] : series[i].pts) {
      if (!pts.empty()) pts += ' ';
      pts += fmt_coord(sx(n)) + "," + fmt_coord(sy(v));
    }
    out << "<polyline points=\"" << pts << "\" fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    for (const auto& [n, v] : series[i].pts)
      out << "<circle cx=\"" << fmt_coord(sx(n)) << "\" cy=\"" << fmt_coord(sy(v))
          << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    double ly = py0 + 18 + 18 * static_cast<double>(i);
    out << "<line x1=\"575\" y1=\"" << fmt_coord(ly - 4) << "\" x2=\"600\" y2=\""
        << fmt_coord(ly - 4) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"606\" y=\"" << fmt_coord(ly)
        << "\" font-size=\"11\" font-family=\"sans-serif\">" << to_string(series[i].method)
        << "</text>\n";
  }
  out << "</svg>\n";
  out.close();
  if (!out) throw std::runtime_error("emit_report: write failed for " + path.string());
}

}  // namespace

void emit_report(const SweepResult& sweep, const std::filesystem::path& output_dir) {
  std::error_code ec;
  std::filesystem::create_directories(output_dir, ec);
  if (ec && !std::filesystem::is_directory(output_dir))
    throw std::runtime_error("emit_report: cannot create directory " + output_dir.string());
  write_trials_csv(sweep, output_dir / "trials.csv");
  write_summary_json(sweep, output_dir / "summary.json");
  write_curves_svg(sweep, output_dir / "curves.svg");
}

}  // namespace preflearn
