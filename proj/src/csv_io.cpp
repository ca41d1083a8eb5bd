#include "dmar/csv_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

namespace dmar::csv {

namespace {

std::string fmt_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, std::size_t line_no, const std::string& col) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (...) {
    throw data_error("csv line " + std::to_string(line_no) + ": bad numeric value in column " +
                     col);
  }
}

std::uint8_t parse_binary(const std::string& s, std::size_t line_no, const std::string& col) {
  if (s == "0") return 0;
  if (s == "1") return 1;
  throw data_error("csv line " + std::to_string(line_no) + ": column " + col + " must be 0 or 1");
}

}  // namespace

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open input file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw data_error("empty input file '" + path + "'");
  const std::vector<std::string> header = split_line(line);

  long ri = -1, ti = -1, yi = -1, rti = -1;
  std::vector<long> xcols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& h = header[c];
    if (h == "r")
      ri = static_cast<long>(c);
    else if (h == "t")
      ti = static_cast<long>(c);
    else if (h == "y")
      yi = static_cast<long>(c);
    else if (h == "rt")
      rti = static_cast<long>(c);
    else if (h.size() >= 2 && h[0] == 'x')
      xcols.push_back(static_cast<long>(c));
    else
      throw data_error("unknown csv column '" + h + "'");
  }
  if (ri < 0 || ti < 0 || yi < 0) throw data_error("csv header must contain r,t,y columns");
  if (xcols.empty()) throw data_error("csv header must contain covariate columns x1..xd");
  for (std::size_t k = 0; k < xcols.size(); ++k) {
    if (header[xcols[k]] != "x" + std::to_string(k + 1))
      throw data_error("covariate columns must be named x1..xd in order");
  }

  std::vector<std::uint8_t> r, t, rt;
  std::vector<double> y;
  std::vector<double> xdata;
  std::size_t n = 0, line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> f = split_line(line);
    if (f.size() != header.size())
      throw data_error("csv line " + std::to_string(line_no) + ": wrong field count");
    r.push_back(parse_binary(f[ri], line_no, "r"));
    t.push_back(parse_binary(f[ti], line_no, "t"));
    if (rti >= 0) rt.push_back(parse_binary(f[rti], line_no, "rt"));
    const bool labeled = r.back() && (rti < 0 || rt.back());
    if (f[yi].empty()) {
      if (labeled)
        throw data_error("csv line " + std::to_string(line_no) + ": y missing where r=1");
      y.push_back(std::numeric_limits<double>::quiet_NaN());
    } else {
      // tolerated but ignored where effectively unlabeled
      const double v = parse_double(f[yi], line_no, "y");
      y.push_back(labeled ? v : std::numeric_limits<double>::quiet_NaN());
    }
    for (long c : xcols) xdata.push_back(parse_double(f[c], line_no, header[c]));
    ++n;
  }
  if (n == 0) throw data_error("input file '" + path + "' has no data rows");

  const std::size_t d_raw = xcols.size();
  Matrix x(n, d_raw + 1);
  for (std::size_t i = 0; i < n; ++i) {
    x.at(i, 0) = 1.0;  // intercept prepended; files never carry it
    for (std::size_t j = 0; j < d_raw; ++j) x.at(i, j + 1) = xdata[i * d_raw + j];
  }
  std::optional<std::vector<std::uint8_t>> rt_opt;
  if (rti >= 0) rt_opt = std::move(rt);
  return Dataset(std::move(x), std::move(t), std::move(r), std::move(y), std::move(rt_opt));
}

void write_dataset(const std::string& path, const Dataset& ds) {
  std::ostringstream out;
  const bool has_rt = ds.treatment_label().has_value();
  out << "r,t,y";
  if (has_rt) out << ",rt";
  for (std::size_t j = 1; j < ds.dim(); ++j) out << ",x" << j;
  out << "\n";
  for (std::size_t i = 0; i < ds.n(); ++i) {
    out << int(ds.outcome_label()[i]) << ',' << int(ds.treatment_raw()[i]) << ',';
    if (ds.effective_label(i)) out << fmt_full(ds.outcome_raw()[i]);
    if (has_rt) out << ',' << int((*ds.treatment_label())[i]);
    for (std::size_t j = 1; j < ds.dim(); ++j) out << ',' << fmt_full(ds.covariates().at(i, j));
    out << "\n";
  }
  write_file(path, out.str());
}

std::string metrics_csv(const simulate::MetricsTable& table) {
  std::ostringstream out;
  out << "estimator,bias,rmse,length,coverage,esd,asd,n_fail\n";
  for (const auto& row : table.rows) {
    out << row.estimator << ',' << fmt_full(row.bias) << ',' << fmt_full(row.rmse) << ','
        << fmt_full(row.length) << ',' << fmt_full(row.coverage) << ',' << fmt_full(row.esd)
        << ',' << fmt_full(row.asd) << ',' << row.n_fail << "\n";
  }
  return out.str();
}

std::string metrics_text(const simulate::MetricsTable& table) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-10s %10s %10s %10s %10s %10s %10s %7s\n", "Estimator",
                "Bias", "RMSE", "Length", "Coverage", "ESD", "ASD", "Fails");
  out << line;
  for (const auto& row : table.rows) {
    std::snprintf(line, sizeof(line), "%-10s %10s %10s %10s %10s %10s %10s %7d\n",
                  row.estimator.c_str(), fmt6(row.bias).c_str(), fmt6(row.rmse).c_str(),
                  fmt6(row.length).c_str(), fmt6(row.coverage).c_str(), fmt6(row.esd).c_str(),
                  fmt6(row.asd).c_str(), row.n_fail);
    out << line;
  }
  std::snprintf(line, sizeof(line), "true ATE %s (mc se %s), %d replications%s\n",
                fmt6(table.mu0).c_str(), fmt6(table.mu0_se).c_str(), table.n_reps,
                table.valid ? "" : "  [INVALID: too many failures]");
  out << line;
  return out.str();
}

std::string report_kv(const AteReport& report, const std::string& method) {
  std::ostringstream out;
  out << "key,value\n";
  out << "method," << method << "\n";
  out << "n," << report.n << "\n";
  out << "mu_hat," << fmt_full(report.mu_hat) << "\n";
  out << "sigma_hat," << fmt_full(report.sigma_hat) << "\n";
  out << "se," << fmt_full(std::sqrt(report.sigma_hat / static_cast<double>(report.n))) << "\n";
  out << "ci_level," << fmt_full(report.ci_level) << "\n";
  out << "ci_lo," << fmt_full(report.ci.lo) << "\n";
  out << "ci_hi," << fmt_full(report.ci.hi) << "\n";
  out << "theta1," << fmt_full(report.arm1.theta_hat) << "\n";
  out << "theta0," << fmt_full(report.arm0.theta_hat) << "\n";
  out << "sigma1," << fmt_full(report.arm1.sigma_hat) << "\n";
  out << "sigma0," << fmt_full(report.arm0.sigma_hat) << "\n";
  out << "gamma_bar_1," << fmt_full(report.diagnostics.gamma_bar_1) << "\n";
  out << "gamma_bar_0," << fmt_full(report.diagnostics.gamma_bar_0) << "\n";
  out << "a_hat_1," << fmt_full(report.diagnostics.a_hat_1) << "\n";
  out << "a_hat_0," << fmt_full(report.diagnostics.a_hat_0) << "\n";
  out << "effective_sample_size," << fmt_full(report.diagnostics.effective_sample_size) << "\n";
  out << "ps_clip_events," << report.diagnostics.ps_clip_events << "\n";
  out << "solver_clamp_events," << report.diagnostics.solver_clamp_events << "\n";
  out << "degraded," << (report.diagnostics.degraded ? 1 : 0) << "\n";
  out << "n_repeats," << report.n_repeats << "\n";
  return out.str();
}

std::string report_summary(const AteReport& report, const std::string& method) {
  std::ostringstream out;
  out << method << ": ate " << fmt6(report.mu_hat) << "  se "
      << fmt6(std::sqrt(report.sigma_hat / static_cast<double>(report.n))) << "  "
      << fmt6(report.ci_level * 100) << "% ci [" << fmt6(report.ci.lo) << ", "
      << fmt6(report.ci.hi) << "]\n";
  out << "arms: theta1 " << fmt6(report.arm1.theta_hat) << "  theta0 "
      << fmt6(report.arm0.theta_hat) << "\n";
  out << "labeled fractions: arm1 " << fmt6(report.diagnostics.gamma_bar_1) << "  arm0 "
      << fmt6(report.diagnostics.gamma_bar_0) << "  effective n "
      << fmt6(report.diagnostics.effective_sample_size) << "\n";
  if (report.diagnostics.ps_clip_events > 0)
    out << "note: propensity floor hit " << report.diagnostics.ps_clip_events << " times\n";
  if (report.diagnostics.degraded) out << "note: a tilted fit clamped its exponent (degraded)\n";
  return out.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot open output file '" + path + "'");
  out << content;
  if (!out) throw data_error("failed writing '" + path + "'");
}

}  // namespace dmar::csv
