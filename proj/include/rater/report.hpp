#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "rater/posterior.hpp"

namespace rater {

// Human-readable overview: model, prior provenance, method, the first rows
// of the parameter table and of the latent-class table. Numbers use two
// decimals.
std::string summary_text(const FitResult& fit, int rows = 8);

// chain,iteration,<parameter names>; one row per stored draw.
std::string draws_csv(const FitResult& fit);
std::string estimates_csv(const FitResult& fit, Quantity which);
// item,Pr(z=1),...,Pr(z=K),MAP
std::string class_probabilities_csv(const FitResult& fit, const std::vector<long long>& items = {});
std::string intervals_csv(const FitResult& fit, double level);
std::string waic_json(const FitResult& fit);

enum class PlotKind { raters, prevalence, latent_class };
PlotKind parse_plot_kind(std::string_view name);
// Tidy tables for plotting; `items` (1-based) filters latent-class rows.
std::string plot_data_csv(const FitResult& fit, PlotKind kind, const std::vector<long long>& items = {},
                          double level = 0.9);

// Parameter file for simulation: {"pi": [...], "theta": [[[...]]]} with
// theta indexed rater, true class, rated class.
Params parse_params_json(std::string_view text);
// item,rater CSV (header optional), 1-based positive integers.
std::vector<DesignCell> parse_design_csv(std::string_view text);
// item,rater,rating CSV of simulated ratings (1-based).
std::string simulated_csv(const std::vector<DesignCell>& design, const std::vector<int>& ratings);

// Shortest round-tripping decimal form used in every CSV output.
std::string format_number(double v);

}  // namespace rater
