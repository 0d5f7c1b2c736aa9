#pragma once

// Trace, dataset and plot-data serialization. Floating point values are
// written with 17 significant digits so files round-trip exactly.

#include <filesystem>
#include <string>

#include "wgfvi/gaussian_flow.hpp"
#include "wgfvi/mixture_flow.hpp"
#include "wgfvi/targets.hpp"

namespace wgfvi {

std::string format_double(double v);

/// Columns t, kl, m_1..m_d, sigma_11..sigma_dd (row-major), plus
/// w2sq_to_ref when the trace carries it. The kl column is empty when the
/// trace has no KL values.
std::string gaussian_trace_csv(const FlowTrace<double>& trace);

/// One JSON object per snapshot: {"t", "kl", "kl_stderr", "components": [{"w", "m", "sigma"}]}.
std::string mixture_trace_jsonl(const MixtureTrace<double>& trace);

/// Plot data: rows snapshot,t,component,w,x,y tracing the 2-sigma ellipse
/// of every component at every recorded snapshot.
std::string ellipse_csv(const MixtureTrace<double>& trace, int points_per_ellipse = 48);

/// Header y,x1..xd, one row per example.
std::string dataset_csv(const LogisticDataset<double>& ds);

/// Sidecar JSON with the generating parameters m_star, sigma_star, s, seed.
std::string dataset_sidecar_json(const LogisticDataset<double>& ds);

/// Inverse of dataset_csv / dataset_sidecar_json. Throws ConfigError on
/// malformed input.
LogisticDataset<double> parse_dataset(const std::string& csv, const std::string& sidecar_json);

LogisticDataset<double> load_dataset(const std::filesystem::path& csv_path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

/// Path of the sidecar JSON belonging to a dataset CSV (data.csv -> data.json).
std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);

}  // namespace wgfvi
