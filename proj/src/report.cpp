#include "rater/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <json.hpp>

#include "rater/error.hpp"

namespace rater {

namespace {

std::string fixed2(double v) {
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  if (std::isnan(v)) return "NaN";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  // Avoid "-0.00".
  if (std::string_view(buf) == "-0.00") return "0.00";
  return buf;
}

std::string pad_left(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::string pad_right(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

// Draws of the displayed parameters: pi plus theta (derived for the
// hierarchical model) or pi plus p.
PosteriorDraws display_draws(const FitResult& fit) {
  if (fit.kind() != Parameterization::hierarchical) return fit.draws;
  const int J = fit.raters();
  const int K = fit.categories();
  PosteriorDraws out;
  out.names = parameter_names(Parameterization::dawid_skene, J, K);
  out.draws_per_chain = fit.draws.draws_per_chain;
  for (std::size_t c = 0; c < fit.draws.chains.size(); ++c) {
    std::vector<double> chain;
    for (int s = 0; s < fit.draws.draws_per_chain; ++s) {
      const auto p = unflatten(fit.draws.row(c, static_cast<std::size_t>(s)), fit.kind(), J, K);
      const auto& pi = params_pi(p);
      const auto theta = error_matrices(p);
      chain.insert(chain.end(), pi.begin(), pi.end());
      chain.insert(chain.end(), theta.begin(), theta.end());
    }
    out.chains.push_back(std::move(chain));
  }
  return out;
}

struct Row {
  std::string name;
  std::vector<std::string> cells;
};

std::string render_table(const std::vector<std::string>& header, const std::vector<Row>& rows) {
  std::size_t name_width = 0;
  for (const auto& r : rows) name_width = std::max(name_width, r.name.size());
  std::vector<std::size_t> widths(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    widths[c] = header[c].size();
    for (const auto& r : rows) widths[c] = std::max(widths[c], r.cells[c].size());
  }
  std::string out = std::string(name_width, ' ');
  for (std::size_t c = 0; c < header.size(); ++c) out += " " + pad_left(header[c], widths[c]);
  out += '\n';
  for (const auto& r : rows) {
    out += pad_right(r.name, name_width);
    for (std::size_t c = 0; c < header.size(); ++c) out += " " + pad_left(r.cells[c], widths[c]);
    out += '\n';
  }
  return out;
}

const char* error_label(const FitResult& fit) {
  return fit.kind() == Parameterization::class_conditional ? "p" : "theta";
}

std::string prior_lines(const ModelSpec& spec) {
  std::string out = std::string("alpha: ") + (spec.alpha_default ? "default" : "custom") + "\n";
  if (std::holds_alternative<HierarchicalPrior>(spec.error_prior))
    out += "mu: normal(0, 1)\nsigma: half-normal(0, 1)\n";
  else
    out += std::string("beta: ") + (spec.beta_default ? "default" : "custom") + "\n";
  return out;
}

std::string item_label(const FitResult& fit, long long i) {
  const auto& labels = fit.data.item_labels();
  return static_cast<std::size_t>(i) < labels.size() ? labels[static_cast<std::size_t>(i)] : std::to_string(i + 1);
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "NaN";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string summary_text(const FitResult& fit, int rows) {
  const bool mcmc = fit.method == Method::mcmc;
  std::string out = "Model:\n";
  out += std::string(variant_title(fit.spec.variant)) + " \n\n";
  out += "Prior parameters:\n\n" + prior_lines(fit.spec) + "\n";
  out += std::string("Fitting method: ") + (mcmc ? "MCMC" : "Optimisation") + "\n\n";
  out += std::string("pi/") + error_label(fit) + (mcmc ? " samples:\n" : " estimates:\n");

  std::vector<Row> table;
  std::size_t total_rows = 0;
  if (mcmc) {
    const PosteriorDraws draws = display_draws(fit);
    total_rows = draws.parameters();
    const std::size_t shown = std::min<std::size_t>(total_rows, static_cast<std::size_t>(rows));
    for (std::size_t p = 0; p < shown; ++p) {
      std::vector<double> pooled;
      for (const auto& col : draws.columns(p)) pooled.insert(pooled.end(), col.begin(), col.end());
      double mean = 0.0;
      for (double v : pooled) mean += v;
      mean /= static_cast<double>(pooled.size());
      DiagnosticValue rhat, ess;
      if (fit.kind() == Parameterization::hierarchical) {
        const auto cols = draws.columns(p);
        rhat = split_rhat(cols);
        ess = effective_sample_size(cols);
      } else {
        rhat = fit.diagnostics.parameters[p].rhat;
        ess = fit.diagnostics.parameters[p].ess;
      }
      table.push_back({draws.names[p],
                       {fixed2(mean), fixed2(quantile(pooled, 0.05)), fixed2(quantile(pooled, 0.95)),
                        fixed2(rhat.value), fixed2(ess.value)}});
    }
    out += render_table({"mean", "5%", "95%", "Rhat", "ess"}, table);
  } else {
    const auto pi = point_estimate(fit, Quantity::pi);
    const auto err = point_estimate(fit, fit.kind() == Parameterization::class_conditional ? Quantity::p
                                                                                          : Quantity::theta);
    std::vector<std::pair<std::string, double>> all;
    for (std::size_t i = 0; i < pi.names.size(); ++i) all.emplace_back(pi.names[i], pi.values[i]);
    for (std::size_t i = 0; i < err.names.size(); ++i) all.emplace_back(err.names[i], err.values[i]);
    total_rows = all.size();
    for (std::size_t i = 0; i < std::min<std::size_t>(all.size(), static_cast<std::size_t>(rows)); ++i)
      table.push_back({all[i].first, {fixed2(all[i].second)}});
    out += render_table({"mode"}, table);
  }
  if (total_rows > table.size()) out += "# ... with " + std::to_string(total_rows - table.size()) + " more rows\n";

  out += "\nz:\n";
  const int K = fit.categories();
  const auto& probs = fit.class_probabilities;
  const auto map = argmax_rows(probs, K);
  std::vector<std::string> header{"MAP"};
  for (int k = 0; k < K; ++k) header.push_back("Pr(z = " + std::to_string(k + 1) + ")");
  std::vector<Row> zrows;
  const long long items = fit.items();
  const long long shown = std::min<long long>(items, rows);
  for (long long i = 0; i < shown; ++i) {
    Row r{"z[" + std::to_string(i + 1) + "]", {std::to_string(map[static_cast<std::size_t>(i)] + 1)}};
    for (int k = 0; k < K; ++k) r.cells.push_back(fixed2(probs[static_cast<std::size_t>(i) * K + k]));
    zrows.push_back(std::move(r));
  }
  out += render_table(header, zrows);
  if (items > shown) out += "# ... with " + std::to_string(items - shown) + " more items\n";

  if (!fit.warnings.empty()) {
    out += "\nWarnings:\n";
    for (const auto& w : fit.warnings) out += "- " + w + "\n";
  }
  return out;
}

std::string draws_csv(const FitResult& fit) {
  if (fit.method != Method::mcmc) throw UnsupportedError("draws are not available for optimisation fits");
  std::string out = "chain,iteration";
  for (const auto& n : fit.draws.names) out += ",\"" + n + "\"";
  out += '\n';
  for (std::size_t c = 0; c < fit.draws.chains.size(); ++c)
    for (int s = 0; s < fit.draws.draws_per_chain; ++s) {
      out += std::to_string(c + 1) + "," + std::to_string(s + 1);
      for (double v : fit.draws.row(c, static_cast<std::size_t>(s))) out += "," + format_number(v);
      out += '\n';
    }
  return out;
}

std::string estimates_csv(const FitResult& fit, Quantity which) {
  const auto est = point_estimate(fit, which);
  std::string out;
  if (which == Quantity::z) {
    out = "item,z\n";
    for (std::size_t i = 0; i < est.values.size(); ++i)
      out += item_label(fit, static_cast<long long>(i)) + "," + std::to_string(static_cast<int>(est.values[i])) + "\n";
    return out;
  }
  out = "parameter,estimate\n";
  for (std::size_t i = 0; i < est.values.size(); ++i)
    out += "\"" + est.names[i] + "\"," + format_number(est.values[i]) + "\n";
  return out;
}

std::string class_probabilities_csv(const FitResult& fit, const std::vector<long long>& items) {
  const int K = fit.categories();
  const auto& probs = fit.class_probabilities;
  const auto map = argmax_rows(probs, K);
  std::string out = "item";
  for (int k = 0; k < K; ++k) out += ",Pr(z=" + std::to_string(k + 1) + ")";
  out += ",MAP\n";
  auto emit = [&](long long i) {
    if (i < 0 || i >= fit.items())
      throw ArgumentError("item " + std::to_string(i + 1) + " is outside 1.." + std::to_string(fit.items()));
    out += item_label(fit, i);
    for (int k = 0; k < K; ++k) out += "," + format_number(probs[static_cast<std::size_t>(i) * K + k]);
    out += "," + std::to_string(map[static_cast<std::size_t>(i)] + 1) + "\n";
  };
  if (items.empty())
    for (long long i = 0; i < fit.items(); ++i) emit(i);
  else
    for (long long i : items) emit(i - 1);
  return out;
}

std::string intervals_csv(const FitResult& fit, double level) {
  auto pi = posterior_interval(fit, level, Quantity::pi);
  const auto err = posterior_interval(
      fit, level, fit.kind() == Parameterization::class_conditional ? Quantity::p : Quantity::theta);
  pi.insert(pi.end(), err.begin(), err.end());
  std::string out = "parameter,lower,upper\n";
  for (const auto& iv : pi)
    out += "\"" + iv.name + "\"," + format_number(iv.lower) + "," + format_number(iv.upper) + "\n";
  return out;
}

std::string waic_json(const FitResult& fit) {
  const auto w = waic(fit);
  nlohmann::json j{{"waic", w.waic}, {"lppd", w.lppd}, {"p_waic", w.p_waic},
                   {"unit", fit.data.as_grouped() ? "pattern" : "item"}};
  nlohmann::json points = nlohmann::json::array();
  for (std::size_t u = 0; u < w.weight.size(); ++u)
    points.push_back({{"unit", u + 1}, {"weight", w.weight[u]}, {"lppd", w.lppd_unit[u]}, {"p_waic", w.p_waic_unit[u]}});
  j["pointwise"] = points;
  return j.dump(1) + "\n";
}

PlotKind parse_plot_kind(std::string_view name) {
  if (name == "raters") return PlotKind::raters;
  if (name == "prevalence") return PlotKind::prevalence;
  if (name == "latent-class" || name == "latent_class") return PlotKind::latent_class;
  throw ArgumentError("unknown plot kind '" + std::string(name) + "'");
}

std::string plot_data_csv(const FitResult& fit, PlotKind kind, const std::vector<long long>& items, double level) {
  const int K = fit.categories();
  switch (kind) {
    case PlotKind::raters: {
      const auto theta = point_estimate(fit, Quantity::theta);
      std::string out = "rater,true_class,rated_class,mean_prob\n";
      const auto& labels = fit.data.rater_labels();
      for (int j = 0; j < fit.raters(); ++j)
        for (int k = 0; k < K; ++k)
          for (int kk = 0; kk < K; ++kk)
            out += labels[static_cast<std::size_t>(j)] + "," + std::to_string(k + 1) + "," + std::to_string(kk + 1) +
                   "," + format_number(theta.values[(static_cast<std::size_t>(j) * K + k) * K + kk]) + "\n";
      return out;
    }
    case PlotKind::prevalence: {
      const auto pi = point_estimate(fit, Quantity::pi);
      std::vector<Interval> iv;
      if (fit.method == Method::mcmc) iv = posterior_interval(fit, level, Quantity::pi);
      std::string out = "class,mean,lower,upper\n";
      for (int k = 0; k < K; ++k) {
        out += std::to_string(k + 1) + "," + format_number(pi.values[static_cast<std::size_t>(k)]);
        if (iv.empty())
          out += ",NA,NA\n";
        else
          out += "," + format_number(iv[static_cast<std::size_t>(k)].lower) + "," +
                 format_number(iv[static_cast<std::size_t>(k)].upper) + "\n";
      }
      return out;
    }
    case PlotKind::latent_class: return class_probabilities_csv(fit, items);
  }
  return {};
}

}  // namespace rater

namespace rater {

Params parse_params_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid parameter file: ") + e.what(), 1);
  }
  try {
    DsParams p;
    p.pi = j.at("pi").get<std::vector<double>>();
    const auto theta = j.at("theta").get<std::vector<std::vector<std::vector<double>>>>();
    p.categories = static_cast<int>(p.pi.size());
    p.raters = static_cast<int>(theta.size());
    if (p.categories < 1 || p.raters < 1) throw ShapeError("parameter file needs pi and at least one theta matrix");
    for (const auto& m : theta) {
      if (m.size() != p.pi.size()) throw ShapeError("each theta matrix must have K rows");
      for (const auto& row : m) {
        if (row.size() != p.pi.size()) throw ShapeError("each theta row must have K entries");
        p.theta.insert(p.theta.end(), row.begin(), row.end());
      }
    }
    validate(p);
    return p;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(std::string("invalid parameter file: ") + e.what(), 1);
  }
}

std::vector<DesignCell> parse_design_csv(std::string_view text) {
  std::vector<DesignCell> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string_view::npos) throw ParseError("expected item,rater", line_no);
    auto field = [&](std::string_view s, long long& v) {
      while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
      while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      return ec == std::errc() && ptr == s.data() + s.size();
    };
    long long item = 0, rater = 0;
    const bool ok = field(line.substr(0, comma), item) && field(line.substr(comma + 1), rater);
    if (!ok) {
      if (out.empty() && line_no == 1) continue;  // header
      throw ParseError("non-integer design cell", line_no);
    }
    if (item < 1 || rater < 1) throw DomainError("line " + std::to_string(line_no) + ": indices must be positive");
    out.push_back({item - 1, static_cast<int>(rater - 1)});
  }
  if (out.empty()) throw EmptyDataError("design has no cells");
  return out;
}

std::string simulated_csv(const std::vector<DesignCell>& design, const std::vector<int>& ratings) {
  std::string out = "item,rater,rating\n";
  for (std::size_t i = 0; i < design.size(); ++i)
    out += std::to_string(design[i].item + 1) + "," + std::to_string(design[i].rater + 1) + "," +
           std::to_string(ratings[i] + 1) + "\n";
  return out;
}

}  // namespace rater
