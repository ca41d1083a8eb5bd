#pragma once

#include <string>

#include "dmar/dataset.hpp"
#include "dmar/report.hpp"
#include "dmar/simulate.hpp"

namespace dmar::csv {

// Dataset files carry the header r,t,y,x1,...,xd with an optional rt column
// (treatment observation indicator). The y field is empty where the outcome
// is unobserved; a y given where r=0 is tolerated and ignored, a missing y
// where r=1 is an error. Files never contain the intercept column; the loader
// prepends the constant-1 column and the writer strips it.
Dataset load_dataset(const std::string& path);
void write_dataset(const std::string& path, const Dataset& ds);

// Metrics tables: one row per estimator, full double precision.
std::string metrics_csv(const simulate::MetricsTable& table);
// Aligned plain-text rendering, 6 significant digits.
std::string metrics_text(const simulate::MetricsTable& table);

// Estimate reports as key,value rows, full double precision.
std::string report_kv(const AteReport& report, const std::string& method);
// Short human-readable summary.
std::string report_summary(const AteReport& report, const std::string& method);

void write_file(const std::string& path, const std::string& content);

}  // namespace dmar::csv
