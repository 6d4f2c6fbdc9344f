#pragma once

// Independent reference implementations and generators shared by the test
// binaries. Nothing here calls into the likelihood code under test.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rater/dataset.hpp"
#include "rater/likelihood.hpp"

namespace support {

inline const char* kTable1Long = "item,rater,rating\n1,1,3\n1,2,4\n2,1,2\n2,2,2\n3,1,2\n3,2,2\n";
inline const char* kTable1Wide = "item,1,2\n1,3,4\n2,2,2\n3,2,2\n";
inline const char* kTable1Grouped = "1,2,n\n3,4,1\n2,2,2\n";
inline const char* kTable2Long =
    "item,rater,rating\n1,1,3\n1,2,4\n2,1,2\n2,2,2\n3,1,2\n3,2,2\n4,1,3\n5,1,3\n6,2,4\n";
inline const char* kTable2Wide = "item,1,2\n1,3,4\n2,2,2\n3,2,2\n4,3,NA\n5,3,NA\n6,NA,4\n";

inline std::string data_path(const std::string& name) { return std::string(RATER_DATA_DIR) + "/" + name; }

inline std::vector<double> random_simplex(std::mt19937_64& rng, int k, double floor = 0.02) {
  std::gamma_distribution<double> g(1.5, 1.0);
  std::vector<double> out(k);
  double total = 0;
  for (auto& v : out) total += v = g(rng) + floor;
  for (auto& v : out) v /= total;
  return out;
}

inline rater::DsParams random_ds(std::mt19937_64& rng, int raters, int k) {
  rater::DsParams p{raters, k, random_simplex(rng, k), {}};
  for (int r = 0; r < raters * k; ++r) {
    auto row = random_simplex(rng, k);
    p.theta.insert(p.theta.end(), row.begin(), row.end());
  }
  return p;
}

inline rater::CcParams random_cc(std::mt19937_64& rng, int raters, int k) {
  std::uniform_real_distribution<double> u(0.2, 0.95);
  rater::CcParams p{raters, k, random_simplex(rng, k), {}};
  for (int r = 0; r < raters * k; ++r) p.p.push_back(u(rng));
  return p;
}

inline rater::HdsParams random_hds(std::mt19937_64& rng, int raters, int k) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> s(0.3, 2.0);
  rater::HdsParams p{raters, k, random_simplex(rng, k), {}, {}, {}};
  for (int i = 0; i < k * k; ++i) {
    p.mu.push_back(n(rng));
    p.sigma.push_back(s(rng));
  }
  for (int i = 0; i < raters * k * k; ++i) p.gamma.push_back(n(rng));
  return p;
}

// Long dataset of `items` items, each rated once by every rater with
// probability `coverage` (at least one rating per item), ratings uniform.
inline rater::RatingDataset random_long(std::mt19937_64& rng, int items, int raters, int k, double coverage = 1.0,
                                        int repeats = 1) {
  rater::LongRatings l{{}, items, raters, k};
  std::uniform_int_distribution<int> cat(0, k - 1), who(0, raters - 1);
  std::bernoulli_distribution keep(coverage);
  for (int i = 0; i < items; ++i) {
    bool any = false;
    for (int j = 0; j < raters; ++j)
      for (int r = 0; r < repeats; ++r)
        if (keep(rng)) {
          l.entries.push_back({i, j, cat(rng)});
          any = true;
        }
    if (!any) l.entries.push_back({i, who(rng), cat(rng)});
  }
  std::vector<std::string> items_l, raters_l;
  for (int i = 0; i < items; ++i) items_l.push_back(std::to_string(i + 1));
  for (int j = 0; j < raters; ++j) raters_l.push_back(std::to_string(j + 1));
  return rater::RatingDataset(l, items_l, raters_l);
}

// Every rater rates every item once; classes drawn from pi, ratings from the
// matching error-matrix row.
inline rater::RatingDataset simulate_long(std::mt19937_64& rng, int items, int raters,
                                          const std::vector<double>& pi, const std::vector<double>& theta,
                                          std::vector<int>* classes = nullptr) {
  const int k = static_cast<int>(pi.size());
  rater::LongRatings l{{}, items, raters, k};
  std::discrete_distribution<int> z_dist(pi.begin(), pi.end());
  for (int i = 0; i < items; ++i) {
    int z = z_dist(rng);
    if (classes) classes->push_back(z);
    for (int j = 0; j < raters; ++j) {
      auto row = theta.begin() + (static_cast<std::ptrdiff_t>(j) * k + z) * k;
      std::discrete_distribution<int> y(row, row + k);
      l.entries.push_back({i, j, y(rng)});
    }
  }
  std::vector<std::string> il, rl;
  for (int i = 0; i < items; ++i) il.push_back(std::to_string(i + 1));
  for (int j = 0; j < raters; ++j) rl.push_back(std::to_string(j + 1));
  return rater::RatingDataset(l, il, rl);
}

// theta with `diag` on every diagonal and the rest spread evenly.
inline std::vector<double> diagonal_theta(int raters, int k, double diag) {
  std::vector<double> t;
  for (int j = 0; j < raters; ++j)
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b) t.push_back(a == b ? diag : (1 - diag) / (k - 1));
  return t;
}

// Ratings per item as (rater, rating) lists, read straight off the entries.
inline std::vector<std::vector<std::pair<int, int>>> per_item(const rater::LongRatings& l) {
  std::vector<std::vector<std::pair<int, int>>> out(l.items);
  for (const auto& e : l.entries) out[e.item].push_back({e.rater, e.rating});
  return out;
}

inline double theta_at(const std::vector<double>& theta, int k, int j, int z, int y) {
  return theta[(static_cast<std::size_t>(j) * k + z) * k + y];
}

// Sum over every joint assignment of latent classes of Pr(y, z), in plain
// probability space.
inline double enumerate_likelihood(const std::vector<double>& pi, const std::vector<double>& theta,
                                   const rater::LongRatings& l) {
  const int k = static_cast<int>(pi.size());
  const auto items = per_item(l);
  std::vector<int> z(l.items, 0);
  double total = 0.0;
  for (;;) {
    double joint = 1.0;
    for (int i = 0; i < l.items; ++i) {
      joint *= pi[z[i]];
      for (auto [j, y] : items[i]) joint *= theta_at(theta, k, j, z[i], y);
    }
    total += joint;
    int pos = 0;
    while (pos < l.items && ++z[pos] == k) z[pos++] = 0;
    if (pos == l.items) break;
  }
  return total;
}

// Pr(z_i = c | y) by summing the joint over all other items' classes.
inline std::vector<double> enumerate_posterior(const std::vector<double>& pi, const std::vector<double>& theta,
                                               const rater::LongRatings& l) {
  const int k = static_cast<int>(pi.size());
  const auto items = per_item(l);
  std::vector<double> mass(static_cast<std::size_t>(l.items) * k, 0.0);
  std::vector<int> z(l.items, 0);
  double total = 0.0;
  for (;;) {
    double joint = 1.0;
    for (int i = 0; i < l.items; ++i) {
      joint *= pi[z[i]];
      for (auto [j, y] : items[i]) joint *= theta_at(theta, k, j, z[i], y);
    }
    total += joint;
    for (int i = 0; i < l.items; ++i) mass[static_cast<std::size_t>(i) * k + z[i]] += joint;
    int pos = 0;
    while (pos < l.items && ++z[pos] == k) z[pos++] = 0;
    if (pos == l.items) break;
  }
  for (auto& m : mass) m /= total;
  return mass;
}

inline double log_beta_density(double x, double a, double b) {
  return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + (a - 1) * std::log(x) + (b - 1) * std::log1p(-x);
}

inline double log_dirichlet_density(const std::vector<double>& x, const std::vector<double>& a) {
  double s = 0, out = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    s += a[i];
    out += (a[i] - 1) * std::log(x[i]) - std::lgamma(a[i]);
  }
  return out + std::lgamma(s);
}

inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
  return worst;
}

// Items of known class: class_counts[k] items of class k, each rated k by
// every one of `raters` raters. With enough raters z is pinned and the
// posterior of pi and of each theta row is conjugate.
inline rater::RatingDataset unanimous_long(const std::vector<int>& class_counts, int raters) {
  const int k = static_cast<int>(class_counts.size());
  rater::LongRatings l{{}, 0, raters, k};
  for (int c = 0; c < k; ++c)
    for (int n = 0; n < class_counts[c]; ++n, ++l.items)
      for (int j = 0; j < raters; ++j) l.entries.push_back({l.items, j, c});
  std::vector<std::string> il, rl;
  for (int i = 0; i < l.items; ++i) il.push_back(std::to_string(i + 1));
  for (int j = 0; j < raters; ++j) rl.push_back(std::to_string(j + 1));
  return rater::RatingDataset(l, il, rl);
}

// Monte Carlo error of the mean of f over correlated chains, by batch means
// (each chain cut into `batches` blocks).
template <class F>
std::pair<double, double> batch_mean_and_se(const std::vector<std::vector<double>>& chains, F f, int batches = 10) {
  std::vector<double> block_means;
  double total = 0;
  std::size_t count = 0;
  for (const auto& c : chains) {
    const std::size_t len = c.size() / batches;
    for (int b = 0; b < batches; ++b) {
      double s = 0;
      for (std::size_t i = b * len; i < (b + 1) * len; ++i) s += f(c[i]);
      block_means.push_back(s / len);
      total += s;
      count += len;
    }
  }
  const double mean = total / count;
  double v = 0;
  for (double m : block_means) v += (m - mean) * (m - mean);
  v /= block_means.size() - 1;
  return {mean, std::sqrt(v / block_means.size())};
}

// |estimate - exact| in Monte Carlo standard errors, for the mean and the
// variance of one Dirichlet marginal Beta(a, total - a).
inline std::pair<double, double> dirichlet_moment_errors(const std::vector<std::vector<double>>& chains, double a,
                                                         double total) {
  const double mean = a / total;
  const double var = a * (total - a) / (total * total * (total + 1));
  auto [m, m_se] = batch_mean_and_se(chains, [](double x) { return x; });
  auto [v, v_se] = batch_mean_and_se(chains, [mean](double x) { return (x - mean) * (x - mean); });
  return {std::abs(m - mean) / m_se, std::abs(v - var) / v_se};
}

}  // namespace support
