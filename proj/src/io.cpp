#include "mixbell/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mixbell {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::uint64_t fnv1a_hash(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

ordered_json nested_rows(const std::vector<double>& flat, int rows, int cols) {
  ordered_json out = ordered_json::array();
  for (int r = 0; r < rows; ++r) {
    ordered_json row = ordered_json::array();
    for (int c = 0; c < cols; ++c) row.push_back(flat[static_cast<std::size_t>(r) * cols + c]);
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<double> flatten_rows(const ordered_json& j, int rows, int cols, const char* what) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows) {
    throw std::runtime_error(std::string("malformed ") + what);
  }
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(rows) * cols);
  for (const auto& row : j) {
    if (!row.is_array() || static_cast<int>(row.size()) != cols) {
      throw std::runtime_error(std::string("malformed ") + what);
    }
    for (const auto& v : row) flat.push_back(v.get<double>());
  }
  return flat;
}

}  // namespace

ordered_json mdp_to_json(const TabularMdp& mdp) {
  ordered_json j;
  j["num_states"] = mdp.num_states;
  j["num_actions"] = mdp.num_actions;
  j["discount"] = mdp.discount;
  j["reward_bound"] = mdp.reward_bound;
  // transition[s][a] is the successor row for cell (s, a).
  ordered_json transition = ordered_json::array();
  for (int s = 0; s < mdp.num_states; ++s) {
    ordered_json per_action = ordered_json::array();
    for (int a = 0; a < mdp.num_actions; ++a) {
      ordered_json row = ordered_json::array();
      for (int sp = 0; sp < mdp.num_states; ++sp) row.push_back(mdp.transition_at(s, a, sp));
      per_action.push_back(std::move(row));
    }
    transition.push_back(std::move(per_action));
  }
  j["transition"] = std::move(transition);
  j["reward"] = nested_rows(mdp.reward, mdp.num_states, mdp.num_actions);
  j["initial_dist"] = mdp.initial_dist;
  return j;
}

TabularMdp mdp_from_json(const ordered_json& j) {
  const int S = j.at("num_states").get<int>();
  const int A = j.at("num_actions").get<int>();
  TabularMdp mdp(S, A, j.at("discount").get<double>(), j.at("reward_bound").get<double>());
  const auto& transition = j.at("transition");
  if (!transition.is_array() || static_cast<int>(transition.size()) != S) {
    throw std::runtime_error("malformed transition tensor");
  }
  for (int s = 0; s < S; ++s) {
    const auto& per_action = transition[s];
    if (!per_action.is_array() || static_cast<int>(per_action.size()) != A) {
      throw std::runtime_error("malformed transition tensor");
    }
    for (int a = 0; a < A; ++a) {
      const auto& row = per_action[a];
      if (!row.is_array() || static_cast<int>(row.size()) != S) {
        throw std::runtime_error("malformed transition tensor");
      }
      for (int sp = 0; sp < S; ++sp) mdp.transition_at(s, a, sp) = row[sp].get<double>();
    }
  }
  mdp.reward = flatten_rows(j.at("reward"), S, A, "reward table");
  mdp.initial_dist = j.at("initial_dist").get<std::vector<double>>();
  if (mdp.initial_dist.size() != static_cast<std::size_t>(S)) {
    throw std::runtime_error("malformed initial distribution");
  }
  return mdp;
}

void save_mdp(const std::filesystem::path& path, const TabularMdp& mdp) {
  write_text_file(path, mdp_to_json(mdp).dump(2) + "\n");
}

TabularMdp load_mdp(const std::filesystem::path& path) {
  return mdp_from_json(ordered_json::parse(read_text_file(path)));
}

ordered_json sampling_dist_to_json(const SamplingDistribution& dist) {
  ordered_json j;
  j["num_states"] = dist.num_states;
  j["num_actions"] = dist.num_actions;
  j["probs"] = nested_rows(dist.probs, dist.num_states, dist.num_actions);
  return j;
}

SamplingDistribution sampling_dist_from_json(const ordered_json& j) {
  const int S = j.at("num_states").get<int>();
  const int A = j.at("num_actions").get<int>();
  return SamplingDistribution(S, A, flatten_rows(j.at("probs"), S, A, "sampling distribution"));
}

void save_sampling_dist(const std::filesystem::path& path, const SamplingDistribution& dist) {
  write_text_file(path, sampling_dist_to_json(dist).dump(2) + "\n");
}

SamplingDistribution load_sampling_dist(const std::filesystem::path& path) {
  return sampling_dist_from_json(ordered_json::parse(read_text_file(path)));
}

void save_dataset(const std::filesystem::path& path, const TransitionDataset& dataset) {
  std::ostringstream out;
  ordered_json header;
  header["n"] = dataset.size();
  header["seed"] = dataset.seed;
  header["num_states"] = dataset.num_states;
  header["num_actions"] = dataset.num_actions;
  out << header.dump() << "\n";
  for (const Transition& t : dataset.triples) {
    ordered_json row;
    row["s"] = t.state;
    row["a"] = t.action;
    row["sp"] = t.next_state;
    out << row.dump() << "\n";
  }
  write_text_file(path, out.str());
}

TransitionDataset load_dataset(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("dataset file is empty");
  const ordered_json header = ordered_json::parse(line);
  const int n = header.at("n").get<int>();
  const int S = header.at("num_states").get<int>();
  const int A = header.at("num_actions").get<int>();
  const std::uint64_t seed = header.at("seed").get<std::uint64_t>();
  std::vector<Transition> triples;
  triples.reserve(n);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const ordered_json row = ordered_json::parse(line);
    triples.push_back({row.at("s").get<int>(), row.at("a").get<int>(), row.at("sp").get<int>()});
  }
  if (static_cast<int>(triples.size()) != n) {
    throw std::runtime_error("dataset header count does not match the triple lines");
  }
  return TransitionDataset::from_triples(S, A, std::move(triples), seed);
}

void save_trace_csv(const std::filesystem::path& path, const SolveTrace& trace) {
  std::ostringstream out;
  out << "k,emp_td,exact_td_target,xi_k,var_term_k,dist_expabs,dist_sup\n";
  for (std::size_t i = 0; i < trace.diagnostics.size(); ++i) {
    const IterationDiagnostics& d = trace.diagnostics[i];
    out << (i + 1) << ',' << format_double(d.empirical_td) << ','
        << format_double(d.exact_td_target) << ',' << format_double(d.input_gap) << ','
        << format_double(d.variance_term) << ',' << format_double(d.dist_expabs) << ','
        << format_double(d.dist_sup) << "\n";
  }
  write_text_file(path, out.str());
}

void write_text_file(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << contents;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace mixbell
