#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "maif/features.hpp"

namespace maif {

enum class Backend { Tabular, Mlp };

const char* to_string(Backend b);

// Maps (features, action) to a scalar value estimate.
class ValueFunction {
 public:
  explicit ValueFunction(int action_count) : action_count_(action_count) {}
  virtual ~ValueFunction() = default;

  virtual Backend backend() const = 0;
  int action_count() const { return action_count_; }
  bool needs_dense() const { return backend() == Backend::Mlp; }

  virtual void q_values(const Features& f, std::span<double> out) const = 0;
  double q(const Features& f, int action) const;

  // Moves Q(f, action) by the TD error: a table write for the tabular
  // backend, one gradient step on 0.5 * td^2 for the approximator.
  virtual void apply_td(const Features& f, int action, double td_error, double learning_rate) = 0;

  virtual std::unique_ptr<ValueFunction> clone() const = 0;
  // Overwrites all parameters with those of `other` (same backend and shape).
  virtual void copy_from(const ValueFunction& other) = 0;
  virtual bool same_parameters(const ValueFunction& other) const = 0;

  std::uint64_t training_steps = 0;

 private:
  int action_count_;
};

class TabularQ final : public ValueFunction {
 public:
  explicit TabularQ(int action_count, double initial_value = 0.0);

  Backend backend() const override { return Backend::Tabular; }
  void q_values(const Features& f, std::span<double> out) const override;
  void apply_td(const Features& f, int action, double td_error, double learning_rate) override;
  std::unique_ptr<ValueFunction> clone() const override;
  void copy_from(const ValueFunction& other) override;
  bool same_parameters(const ValueFunction& other) const override;

  void set(std::uint64_t key, int action, double value);
  std::size_t state_count() const { return index_.size(); }
  double initial_value() const { return initial_; }
  const std::unordered_map<std::uint64_t, std::size_t>& index() const { return index_; }
  std::span<const double> row(std::size_t slot) const;

 private:
  double* row_for(std::uint64_t key);

  double initial_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
  std::vector<double> values_;
};

// One hidden ReLU layer: q = W2 * relu(W1 * x + b1) + b2.
class MlpQ final : public ValueFunction {
 public:
  MlpQ(int input_size, int hidden, int action_count, std::uint64_t seed);

  Backend backend() const override { return Backend::Mlp; }
  void q_values(const Features& f, std::span<double> out) const override;
  void apply_td(const Features& f, int action, double td_error, double learning_rate) override;
  std::unique_ptr<ValueFunction> clone() const override;
  void copy_from(const ValueFunction& other) override;
  bool same_parameters(const ValueFunction& other) const override;

  int input_size() const { return input_; }
  int hidden_size() const { return hidden_; }
  std::size_t parameter_count() const { return params_.size(); }
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  // d q(f, action) / d parameters.
  std::vector<double> gradient(const Features& f, int action) const;

 private:
  std::size_t w1() const { return 0; }
  std::size_t b1() const { return static_cast<std::size_t>(hidden_) * input_; }
  std::size_t w2() const { return b1() + hidden_; }
  std::size_t b2() const { return w2() + static_cast<std::size_t>(action_count()) * hidden_; }
  void hidden_activations(std::span<const float> x, std::vector<double>& pre) const;

  int input_;
  int hidden_;
  std::vector<double> params_;
};

// Self-describing JSON checkpoint: backend, shapes, parameters, training step.
void save_value_function(std::ostream& out, const ValueFunction& vf);
std::unique_ptr<ValueFunction> load_value_function(std::istream& in);
void save_value_function(const std::string& path, const ValueFunction& vf);
std::unique_ptr<ValueFunction> load_value_function(const std::string& path);

}  // namespace maif
