#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "mixbell/data.hpp"
#include "mixbell/mdp.hpp"
#include "mixbell/solver.hpp"

namespace mixbell {

using ordered_json = nlohmann::ordered_json;

/// Shortest decimal string that parses back to the same double (17
/// significant digits).
std::string format_double(double v);

/// FNV-1a 64-bit over a byte string; used to name run directories after
/// their configuration.
std::uint64_t fnv1a_hash(const std::string& bytes);
std::string hash_hex(std::uint64_t h);

ordered_json mdp_to_json(const TabularMdp& mdp);
TabularMdp mdp_from_json(const ordered_json& j);
void save_mdp(const std::filesystem::path& path, const TabularMdp& mdp);
TabularMdp load_mdp(const std::filesystem::path& path);

ordered_json sampling_dist_to_json(const SamplingDistribution& dist);
SamplingDistribution sampling_dist_from_json(const ordered_json& j);
void save_sampling_dist(const std::filesystem::path& path, const SamplingDistribution& dist);
SamplingDistribution load_sampling_dist(const std::filesystem::path& path);

/// JSON-lines layout: a header object with n, seed and the table shape,
/// then one {"s", "a", "sp"} object per triple.
void save_dataset(const std::filesystem::path& path, const TransitionDataset& dataset);
TransitionDataset load_dataset(const std::filesystem::path& path);

/// CSV with columns k, emp_td, exact_td_target, xi_k, var_term_k,
/// dist_expabs, dist_sup; one row per iteration.
void save_trace_csv(const std::filesystem::path& path, const SolveTrace& trace);

void write_text_file(const std::filesystem::path& path, const std::string& contents);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace mixbell
