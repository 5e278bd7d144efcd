#include "maif/value_function.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace maif {

const char* to_string(Backend b) { return b == Backend::Tabular ? "tabular" : "mlp"; }

double ValueFunction::q(const Features& f, int action) const {
  std::vector<double> out(static_cast<std::size_t>(action_count()));
  q_values(f, out);
  return out.at(static_cast<std::size_t>(action));
}

TabularQ::TabularQ(int action_count, double initial_value) : ValueFunction(action_count), initial_(initial_value) {}

void TabularQ::q_values(const Features& f, std::span<double> out) const {
  const auto it = index_.find(f.key);
  if (it == index_.end()) {
    std::fill(out.begin(), out.end(), initial_);
    return;
  }
  const auto r = row(it->second);
  std::copy(r.begin(), r.end(), out.begin());
}

std::span<const double> TabularQ::row(std::size_t slot) const {
  return std::span<const double>(values_).subspan(slot * static_cast<std::size_t>(action_count()),
                                                  static_cast<std::size_t>(action_count()));
}

double* TabularQ::row_for(std::uint64_t key) {
  const auto [it, inserted] = index_.try_emplace(key, index_.size());
  if (inserted) values_.resize(values_.size() + static_cast<std::size_t>(action_count()), initial_);
  return values_.data() + it->second * static_cast<std::size_t>(action_count());
}

void TabularQ::apply_td(const Features& f, int action, double td_error, double learning_rate) {
  row_for(f.key)[action] += learning_rate * td_error;
}

void TabularQ::set(std::uint64_t key, int action, double value) { row_for(key)[action] = value; }

std::unique_ptr<ValueFunction> TabularQ::clone() const { return std::make_unique<TabularQ>(*this); }

void TabularQ::copy_from(const ValueFunction& other) {
  const auto* t = dynamic_cast<const TabularQ*>(&other);
  if (!t || t->action_count() != action_count()) throw std::invalid_argument("TabularQ::copy_from: shape mismatch");
  initial_ = t->initial_;
  index_ = t->index_;
  values_ = t->values_;
}

bool TabularQ::same_parameters(const ValueFunction& other) const {
  const auto* t = dynamic_cast<const TabularQ*>(&other);
  if (!t || t->action_count() != action_count() || t->initial_ != initial_ || t->index_.size() != index_.size())
    return false;
  for (const auto& [key, slot] : index_) {
    const auto it = t->index_.find(key);
    if (it == t->index_.end()) return false;
    const auto mine = row(slot);
    const auto theirs = t->row(it->second);
    if (!std::equal(mine.begin(), mine.end(), theirs.begin())) return false;
  }
  return true;
}

MlpQ::MlpQ(int input_size, int hidden, int action_count, std::uint64_t seed)
    : ValueFunction(action_count), input_(input_size), hidden_(hidden) {
  if (input_size <= 0 || hidden <= 0) throw std::invalid_argument("MlpQ: sizes must be positive");
  params_.assign(b2() + static_cast<std::size_t>(action_count), 0.0);
  std::mt19937_64 rng(seed);
  const double lim1 = std::sqrt(6.0 / (input_size + hidden));
  const double lim2 = std::sqrt(6.0 / (hidden + action_count));
  std::uniform_real_distribution<double> u1(-lim1, lim1);
  std::uniform_real_distribution<double> u2(-lim2, lim2);
  for (std::size_t i = w1(); i < b1(); ++i) params_[i] = u1(rng);
  for (std::size_t i = w2(); i < b2(); ++i) params_[i] = u2(rng);
}

void MlpQ::hidden_activations(std::span<const float> x, std::vector<double>& pre) const {
  if (static_cast<int>(x.size()) != input_) throw std::invalid_argument("MlpQ: feature size mismatch");
  pre.assign(static_cast<std::size_t>(hidden_), 0.0);
  for (int j = 0; j < hidden_; ++j) {
    const double* w = params_.data() + w1() + static_cast<std::size_t>(j) * input_;
    double s = params_[b1() + j];
    for (int i = 0; i < input_; ++i) s += w[i] * x[i];
    pre[j] = s;
  }
}

void MlpQ::q_values(const Features& f, std::span<double> out) const {
  std::vector<double> pre;
  hidden_activations(f.dense, pre);
  for (int a = 0; a < action_count(); ++a) {
    const double* w = params_.data() + w2() + static_cast<std::size_t>(a) * hidden_;
    double s = params_[b2() + a];
    for (int j = 0; j < hidden_; ++j) s += w[j] * std::max(0.0, pre[j]);
    out[a] = s;
  }
}

std::vector<double> MlpQ::gradient(const Features& f, int action) const {
  std::vector<double> pre;
  hidden_activations(f.dense, pre);
  std::vector<double> g(params_.size(), 0.0);
  const double* w_out = params_.data() + w2() + static_cast<std::size_t>(action) * hidden_;
  for (int j = 0; j < hidden_; ++j) {
    const double h = std::max(0.0, pre[j]);
    g[w2() + static_cast<std::size_t>(action) * hidden_ + j] = h;
    if (pre[j] <= 0.0) continue;
    for (int i = 0; i < input_; ++i) g[w1() + static_cast<std::size_t>(j) * input_ + i] = w_out[j] * f.dense[i];
    g[b1() + j] = w_out[j];
  }
  g[b2() + action] = 1.0;
  return g;
}

void MlpQ::apply_td(const Features& f, int action, double td_error, double learning_rate) {
  std::vector<double> pre;
  hidden_activations(f.dense, pre);
  const double step = learning_rate * td_error;
  double* w_out = params_.data() + w2() + static_cast<std::size_t>(action) * hidden_;
  for (int j = 0; j < hidden_; ++j) {
    if (pre[j] <= 0.0) continue;
    const double back = step * w_out[j];
    double* w = params_.data() + w1() + static_cast<std::size_t>(j) * input_;
    for (int i = 0; i < input_; ++i) w[i] += back * f.dense[i];
    params_[b1() + j] += back;
  }
  for (int j = 0; j < hidden_; ++j) w_out[j] += step * std::max(0.0, pre[j]);
  params_[b2() + action] += step;
}

std::unique_ptr<ValueFunction> MlpQ::clone() const { return std::make_unique<MlpQ>(*this); }

void MlpQ::copy_from(const ValueFunction& other) {
  const auto* m = dynamic_cast<const MlpQ*>(&other);
  if (!m || m->input_ != input_ || m->hidden_ != hidden_ || m->action_count() != action_count())
    throw std::invalid_argument("MlpQ::copy_from: shape mismatch");
  params_ = m->params_;
}

bool MlpQ::same_parameters(const ValueFunction& other) const {
  const auto* m = dynamic_cast<const MlpQ*>(&other);
  return m && m->input_ == input_ && m->hidden_ == hidden_ && m->params_ == params_;
}

void save_value_function(std::ostream& out, const ValueFunction& vf) {
  nlohmann::json j;
  j["format"] = "maif-value-function";
  j["version"] = 1;
  j["backend"] = to_string(vf.backend());
  j["actions"] = vf.action_count();
  j["training_steps"] = vf.training_steps;
  if (const auto* t = dynamic_cast<const TabularQ*>(&vf)) {
    j["initial"] = t->initial_value();
    auto entries = nlohmann::json::array();
    std::vector<std::pair<std::uint64_t, std::size_t>> sorted(t->index().begin(), t->index().end());
    std::sort(sorted.begin(), sorted.end());
    for (const auto& [key, slot] : sorted) {
      const auto r = t->row(slot);
      entries.push_back({key, std::vector<double>(r.begin(), r.end())});
    }
    j["entries"] = std::move(entries);
  } else if (const auto* m = dynamic_cast<const MlpQ*>(&vf)) {
    j["input"] = m->input_size();
    j["hidden"] = m->hidden_size();
    const auto p = m->parameters();
    j["params"] = std::vector<double>(p.begin(), p.end());
  }
  out << j.dump() << '\n';
}

std::unique_ptr<ValueFunction> load_value_function(std::istream& in) {
  const auto j = nlohmann::json::parse(in);
  if (j.value("format", "") != "maif-value-function") throw std::runtime_error("checkpoint: unrecognized format");
  const int actions = j.at("actions").get<int>();
  const std::string backend = j.at("backend").get<std::string>();
  std::unique_ptr<ValueFunction> vf;
  if (backend == "tabular") {
    auto t = std::make_unique<TabularQ>(actions, j.at("initial").get<double>());
    for (const auto& e : j.at("entries")) {
      const auto key = e.at(0).get<std::uint64_t>();
      const auto values = e.at(1).get<std::vector<double>>();
      for (int a = 0; a < actions; ++a) t->set(key, a, values.at(static_cast<std::size_t>(a)));
    }
    vf = std::move(t);
  } else if (backend == "mlp") {
    auto m = std::make_unique<MlpQ>(j.at("input").get<int>(), j.at("hidden").get<int>(), actions, 0);
    const auto params = j.at("params").get<std::vector<double>>();
    if (params.size() != m->parameter_count()) throw std::runtime_error("checkpoint: parameter count mismatch");
    std::copy(params.begin(), params.end(), m->parameters().begin());
    vf = std::move(m);
  } else {
    throw std::runtime_error("checkpoint: unknown backend '" + backend + "'");
  }
  vf->training_steps = j.at("training_steps").get<std::uint64_t>();
  return vf;
}

void save_value_function(const std::string& path, const ValueFunction& vf) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  save_value_function(out, vf);
}

std::unique_ptr<ValueFunction> load_value_function(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  return load_value_function(in);
}

}  // namespace maif
