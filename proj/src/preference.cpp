#include "preflearn/preference.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace preflearn {

namespace {

double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

double bt_prob(const TabularPolicy& pi, double gamma, std::size_t x, std::size_t a,
               std::size_t b) {
  if (x >= pi.num_contexts() || a >= pi.num_actions() || b >= pi.num_actions())
    throw std::out_of_range("bt_prob: index out of range");
  if (!std::isfinite(gamma) || gamma < 0.0)
    throw std::invalid_argument("bt_prob: gamma must be finite and nonnegative");
  double pa = pi.prob(x, a);
  double pb = pi.prob(x, b);
  if (pa <= 0.0 || pb <= 0.0)
    throw std::invalid_argument("bt_prob: zero probability entry");
  return stable_sigmoid(gamma * (std::log(pa) - std::log(pb)));
}

PreferenceDataset sample_dataset(const ContextDist& d, const TabularPolicy& mu,
                                 const TabularPolicy& pi_star, double gamma,
                                 std::size_t n, std::uint64_t seed) {
  if (!mu.probs().same_shape(pi_star.probs()))
    throw std::invalid_argument("sample_dataset: mu / pi_star shape mismatch");
  if (d.size() != mu.num_contexts())
    throw std::invalid_argument("sample_dataset: context dist mismatch");
  if (!std::isfinite(gamma) || gamma < 0.0)
    throw std::invalid_argument("sample_dataset: gamma must be finite and nonnegative");

  PreferenceDataset ds;
  ds.gamma_used = gamma;
  ds.generator_seed = seed;
  ds.num_contexts = mu.num_contexts();
  ds.num_actions = mu.num_actions();
  ds.triples.reserve(n);

  RandomStream rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t x = rng.categorical(d.weights());
    std::span<const double> row(mu.probs().row(x), mu.num_actions());
    std::size_t a = rng.categorical(row);
    std::size_t b = rng.categorical(row);
    double p = bt_prob(pi_star, gamma, x, a, b);
    bool a_wins = rng.uniform01() < p;
    ds.triples.push_back(a_wins ? PreferenceTriple{x, a, b} : PreferenceTriple{x, b, a});
  }
  return ds;
}

std::filesystem::path dataset_sidecar_path(const std::filesystem::path& csv_path) {
  std::filesystem::path p = csv_path;
  p.replace_extension(".json");
  return p;
}

void save_dataset(const PreferenceDataset& ds, const std::filesystem::path& csv_path) {
  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("save_dataset: cannot open " + csv_path.string());
  csv << "x,a_plus,a_minus\n";
  for (const PreferenceTriple& t : ds.triples)
    csv << t.context << ',' << t.preferred << ',' << t.dispreferred << '\n';
  csv.close();
  if (!csv) throw std::runtime_error("save_dataset: write failed for " + csv_path.string());

  nlohmann::ordered_json side;
  side["gamma"] = ds.gamma_used;
  side["seed"] = ds.generator_seed;
  side["n"] = ds.triples.size();
  side["num_contexts"] = ds.num_contexts;
  side["num_actions"] = ds.num_actions;
  std::filesystem::path sp = dataset_sidecar_path(csv_path);
  std::ofstream js(sp);
  if (!js) throw std::runtime_error("save_dataset: cannot open " + sp.string());
  js << side.dump(2) << '\n';
}

PreferenceDataset load_dataset(const std::filesystem::path& csv_path) {
  std::ifstream js(dataset_sidecar_path(csv_path));
  if (!js)
    throw std::runtime_error("load_dataset: missing sidecar for " + csv_path.string());
  nlohmann::json side = nlohmann::json::parse(js);

  PreferenceDataset ds;
  ds.gamma_used = side.at("gamma").get<double>();
  ds.generator_seed = side.at("seed").get<std::uint64_t>();
  ds.num_contexts = side.at("num_contexts").get<std::size_t>();
  ds.num_actions = side.at("num_actions").get<std::size_t>();
  std::size_t n = side.at("n").get<std::size_t>();

  std::ifstream csv(csv_path);
  if (!csv) throw std::runtime_error("load_dataset: cannot open " + csv_path.string());
  std::string line;
  if (!std::getline(csv, line) || line != "x,a_plus,a_minus")
    throw std::runtime_error("load_dataset: bad header in " + csv_path.string());
  ds.triples.reserve(n);
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    PreferenceTriple t;
    char c1 = 0, c2 = 0;
    if (!(ss >> t.context >> c1 >> t.preferred >> c2 >> t.dispreferred) || c1 != ',' ||
        c2 != ',')
      throw std::runtime_error("load_dataset: bad row '" + line + "'");
    if (t.context >= ds.num_contexts || t.preferred >= ds.num_actions ||
        t.dispreferred >= ds.num_actions)
      throw std::runtime_error("load_dataset: index out of range in '" + line + "'");
    ds.triples.push_back(t);
  }
  if (ds.triples.size() != n)
    throw std::runtime_error("load_dataset: row count disagrees with sidecar");
  return ds;
}

}  // namespace preflearn
