#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "rmabm/errors.hpp"

namespace rmabm {

// One per step. Per-firm vectors are indexed by C-firm id and record the
// firm that occupied the slot during the step (a bankrupt firm's final
// profit/assets, not its replacement's). reward is NaN for firms not under
// RL control.
struct MetricsFrame {
  long long t = 0;
  std::vector<double> price;
  std::vector<double> sales;
  std::vector<double> output;
  std::vector<double> demand;
  std::vector<double> profit;  // real terms
  std::vector<double> reward;
  std::vector<double> assets;
  std::vector<std::uint8_t> bankrupt;
  double avg_price = 1.0;
  double nominal_gdp = 0.0;
  double real_gdp = 0.0;
  double price_index = 1.0;
  int employment = 0;
  double consumption_spending = 0.0;
};

// Columnar text persistence: one row per step. Header row documents the
// layout; per-firm columns are f<i>_<metric>.
inline void write_frames_csv(const std::string& path, const std::vector<MetricsFrame>& frames) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  const std::size_t n = frames.empty() ? 0 : frames.front().price.size();
  out << "t,avg_price,price_index,nominal_gdp,real_gdp,employment,consumption_spending";
  for (std::size_t i = 0; i < n; ++i) {
    out << ",f" << i << "_price,f" << i << "_sales,f" << i << "_output,f" << i << "_demand,f"
        << i << "_profit,f" << i << "_reward,f" << i << "_assets,f" << i << "_bankrupt";
  }
  out << "\n";
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, ",%.17g", v);
    out << buf;
  };
  for (const auto& f : frames) {
    out << f.t;
    put(f.avg_price);
    put(f.price_index);
    put(f.nominal_gdp);
    put(f.real_gdp);
    out << ',' << f.employment;
    put(f.consumption_spending);
    for (std::size_t i = 0; i < n; ++i) {
      put(f.price[i]);
      put(f.sales[i]);
      put(f.output[i]);
      put(f.demand[i]);
      put(f.profit[i]);
      put(f.reward[i]);
      put(f.assets[i]);
      out << ',' << int(f.bankrupt[i]);
    }
    out << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<MetricsFrame> read_frames_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty frames file: " + path);
  // Firm count from the header: 7 aggregate columns, 8 columns per firm.
  std::size_t cols = 1;
  for (char c : line) cols += (c == ',');
  if (cols < 7 || (cols - 7) % 8 != 0) throw IoError("malformed frames header: " + path);
  const std::size_t n = (cols - 7) / 8;

  std::vector<MetricsFrame> frames;
  std::vector<double> vals;
  vals.reserve(cols);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    vals.clear();
    const char* p = line.c_str();
    char* end = nullptr;
    while (true) {
      vals.push_back(std::strtod(p, &end));
      if (*end != ',') break;
      p = end + 1;
    }
    if (vals.size() != cols) throw IoError("malformed frames row: " + path);
    MetricsFrame f;
    f.t = static_cast<long long>(vals[0]);
    f.avg_price = vals[1];
    f.price_index = vals[2];
    f.nominal_gdp = vals[3];
    f.real_gdp = vals[4];
    f.employment = static_cast<int>(vals[5]);
    f.consumption_spending = vals[6];
    f.price.resize(n);
    f.sales.resize(n);
    f.output.resize(n);
    f.demand.resize(n);
    f.profit.resize(n);
    f.reward.resize(n);
    f.assets.resize(n);
    f.bankrupt.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t base = 7 + 8 * i;
      f.price[i] = vals[base];
      f.sales[i] = vals[base + 1];
      f.output[i] = vals[base + 2];
      f.demand[i] = vals[base + 3];
      f.profit[i] = vals[base + 4];
      f.reward[i] = vals[base + 5];
      f.assets[i] = vals[base + 6];
      f.bankrupt[i] = vals[base + 7] != 0.0;
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace rmabm
