#include "ventctl/simlearn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ventctl/errors.hpp"

namespace ventctl {

using nlohmann::json;

namespace {

constexpr double kMinScale = 1e-8;
constexpr int kFormatVersion = 1;

struct ArchRow {
  double r, c;
  SimArchitecture arch;
  double mae;
};

const ArchRow kReferenceArchitectures[] = {
    {5, 10, {9, 150, {5, 10}, 1}, 0.64},
    {5, 20, {6, 100, {5, 5}, 1}, 0.72},
    {5, 50, {6, 150, {10, 10}, 1}, 0.39},
    {20, 10, {9, 100, {10, 10}, 1}, 0.72},
    {20, 20, {9, 150, {10, 10}, 1}, 0.60},
    {20, 50, {9, 150, {10, 10}, 1}, 0.85},
};

const ArchRow& reference_row(double resistance, double compliance) {
  for (const ArchRow& row : kReferenceArchitectures) {
    if (row.r == resistance && row.c == compliance) return row;
  }
  throw ConfigInvalid("no reference simulator architecture for this setting");
}

// Raw feature column for the transition out of episode step i.
void write_features(const Episode& ep, std::size_t i, const SimFeaturization& feat,
                    double* out) {
  const std::size_t hp = feat.pressure_history;
  const std::size_t hc = feat.control_history;
  const std::size_t ctx = ep.context.size();
  // Pressure sequence = context ++ pressures, left-padded with its first
  // value; p_i sits at ctx + i.
  const auto pressure_at = [&](std::ptrdiff_t k) {
    if (k < 0) k = 0;
    const auto uk = static_cast<std::size_t>(k);
    return uk < ctx ? ep.context[uk] : ep.pressures[uk - ctx];
  };
  for (std::size_t j = 0; j < hp; ++j) {
    const auto k = static_cast<std::ptrdiff_t>(ctx + i) - static_cast<std::ptrdiff_t>(hp - 1 - j);
    out[j] = pressure_at(k);
  }
  for (std::size_t j = 0; j < hc; ++j) {
    const auto k = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(hc - 1 - j);
    out[hp + j] = k < 0 ? 0.0 : ep.controls[static_cast<std::size_t>(k)];
  }
}

Mat normalize_columns(const Mat& x, const Normalizer& norm) {
  Mat out = x;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const auto ur = static_cast<std::size_t>(r);
    out.row(r) = (out.row(r).array() - norm.mean[ur]) / norm.scale[ur];
  }
  return out;
}

}  // namespace

void SimFeaturization::validate() const {
  if (pressure_history < 1 || control_history < 1) {
    throw ConfigInvalid("H_p and H_c must be at least 1");
  }
}

Normalizer Normalizer::identity(std::size_t n) {
  return Normalizer{std::vector<double>(n, 0.0), std::vector<double>(n, 1.0)};
}

Normalizer Normalizer::fit(const Mat& x) {
  if (x.cols() == 0) throw DegenerateData("cannot fit normalization on an empty set");
  Normalizer norm;
  const auto n = static_cast<double>(x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().sum() / n;
    const double sd = std::sqrt(var);
    norm.mean.push_back(mean);
    norm.scale.push_back(sd > kMinScale ? sd : 1.0);
  }
  return norm;
}

void Normalizer::validate() const {
  if (mean.size() != scale.size()) throw ShapeMismatch("normalizer sizes differ");
  for (std::size_t i = 0; i < mean.size(); ++i) {
    if (!std::isfinite(mean[i]) || !std::isfinite(scale[i]) || !(scale[i] > 0.0)) {
      throw ConfigInvalid("normalizer statistics must be finite with positive scale");
    }
  }
}

std::vector<double> featurize(std::span<const double> pressures,
                              std::span<const double> controls, const Normalizer& norm) {
  if (pressures.size() + controls.size() != norm.size()) {
    throw ShapeMismatch("history lengths do not match the normalizer");
  }
  std::vector<double> out;
  out.reserve(norm.size());
  for (double p : pressures) out.push_back(p);
  for (double u : controls) out.push_back(u);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - norm.mean[i]) / norm.scale[i];
  return out;
}

void SimArchitecture::validate() const {
  features.validate();
  if (depth < 1 || width < 1) throw ConfigInvalid("simulator depth and width must be >= 1");
}

SimArchitecture reference_architecture(double resistance, double compliance) {
  return reference_row(resistance, compliance).arch;
}

double reference_open_loop_mae(double resistance, double compliance) {
  return reference_row(resistance, compliance).mae;
}

SimArchitecture desk_architecture(double resistance, double compliance) {
  SimArchitecture arch = reference_architecture(resistance, compliance);
  arch.depth = 2;
  arch.width = 32;
  return arch;
}

std::vector<RegressionSet> build_regression_sets(std::span<const Episode> episodes,
                                                 const SimFeaturization& feat,
                                                 std::size_t boundary_models) {
  feat.validate();
  if (episodes.empty()) throw DegenerateData("no episodes to build regression sets from");
  const std::size_t n_sets = boundary_models + 1;
  std::vector<std::size_t> counts(n_sets, 0);
  for (const Episode& ep : episodes) {
    if (ep.controls.size() != ep.pressures.size()) {
      throw ShapeMismatch("episode pressures and controls differ in length");
    }
    for (std::size_t i = 0; i + 1 < ep.size(); ++i) ++counts[std::min(i, boundary_models)];
  }
  std::vector<RegressionSet> sets(n_sets);
  for (std::size_t s = 0; s < n_sets; ++s) {
    sets[s].inputs.resize(static_cast<Eigen::Index>(feat.size()),
                          static_cast<Eigen::Index>(counts[s]));
    sets[s].last_pressure.reserve(counts[s]);
    sets[s].next_pressure.reserve(counts[s]);
  }
  for (const Episode& ep : episodes) {
    for (std::size_t i = 0; i + 1 < ep.size(); ++i) {
      RegressionSet& set = sets[std::min(i, boundary_models)];
      const auto col = static_cast<Eigen::Index>(set.size());
      write_features(ep, i, feat, set.inputs.col(col).data());
      set.last_pressure.push_back(ep.pressures[i]);
      set.next_pressure.push_back(ep.pressures[i + 1]);
    }
  }
  return sets;
}

EpisodeSplit split_episodes(std::span<const Episode> episodes, Rng& rng,
                            double heldout_fraction) {
  if (!(heldout_fraction >= 0.0 && heldout_fraction < 1.0)) {
    throw ConfigInvalid("held-out fraction must lie in [0, 1)");
  }
  std::vector<std::size_t> order(episodes.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  auto n_held = static_cast<std::size_t>(
      std::llround(heldout_fraction * static_cast<double>(episodes.size())));
  if (heldout_fraction > 0.0 && n_held == 0 && episodes.size() >= 2) n_held = 1;
  EpisodeSplit split;
  for (std::size_t k = 0; k < order.size(); ++k) {
    (k < n_held ? split.heldout : split.train).push_back(episodes[order[k]]);
  }
  return split;
}

SimulatorModel::SimulatorModel(SimFeaturization feat, Normalizer input,
                               std::vector<SubModel> boundary, SubModel general,
                               std::string setting_id)
    : feat_(feat),
      input_(std::move(input)),
      boundary_(std::move(boundary)),
      general_(std::move(general)),
      setting_id_(std::move(setting_id)) {
  feat_.validate();
  input_.validate();
  if (input_.size() != feat_.size()) throw ShapeMismatch("normalizer does not match featurization");
  const auto check = [&](const SubModel& m) {
    if (m.net.input_size() != feat_.size() || m.net.output_size() != 1) {
      throw ShapeMismatch("simulator network has the wrong shape");
    }
    if (!std::isfinite(m.target_mean) || !std::isfinite(m.target_scale) ||
        !(m.target_scale > 0.0)) {
      throw ConfigInvalid("target statistics must be finite with positive scale");
    }
  };
  for (const SubModel& m : boundary_) check(m);
  check(general_);
}

std::size_t SimulatorModel::model_index(std::size_t step) const {
  return std::min(step, boundary_.size());
}

const SubModel& SimulatorModel::sub_model(std::size_t index) const {
  return index < boundary_.size() ? boundary_[index] : general_;
}

double SimulatorModel::predict(std::size_t step, std::span<const double> pressures,
                               std::span<const double> controls, SimStepTape* tape) const {
  if (pressures.size() != feat_.pressure_history || controls.size() != feat_.control_history) {
    throw ShapeMismatch("history lengths do not match the featurization");
  }
  const std::vector<double> x = featurize(pressures, controls, input_);
  const std::size_t index = model_index(step);
  Tape* t = nullptr;
  if (tape) {
    tape->model = index;
    t = &tape->tape;
  }
  const SubModel& m = sub_model(index);
  const double y = m.net.forward_scalar(x, t);
  return pressures.back() + y * m.target_scale + m.target_mean;
}

void SimulatorModel::predict_backward(const SimStepTape& tape, double dout,
                                      std::span<double> dp, std::span<double> du) const {
  if (dp.size() != feat_.pressure_history || du.size() != feat_.control_history) {
    throw ShapeMismatch("gradient spans do not match the featurization");
  }
  const SubModel& m = sub_model(tape.model);
  const Mat dy = Mat::Constant(1, 1, dout * m.target_scale);
  const BackwardResult r = backward(m.net, tape.tape, dy);
  const std::size_t hp = feat_.pressure_history;
  for (std::size_t j = 0; j < hp; ++j) dp[j] += r.dx(static_cast<Eigen::Index>(j), 0) / input_.scale[j];
  for (std::size_t j = 0; j < du.size(); ++j) {
    du[j] += r.dx(static_cast<Eigen::Index>(hp + j), 0) / input_.scale[hp + j];
  }
  dp[hp - 1] += dout;
}

SimulatorModel train_simulator(std::span<const Episode> train, const SimArchitecture& arch,
                               const SimTraining& hyper, Rng& rng,
                               const std::string& setting_id, SimTrainReport* report) {
  arch.validate();
  if (hyper.batch < 1) throw ConfigInvalid("batch size must be >= 1");
  std::vector<RegressionSet> sets = build_regression_sets(train, arch.features,
                                                          arch.boundary_models);
  std::size_t total = 0;
  for (const RegressionSet& s : sets) total += s.size();
  if (total == 0) throw DegenerateData("episodes contain no transitions");

  Mat all(static_cast<Eigen::Index>(arch.features.size()), static_cast<Eigen::Index>(total));
  Eigen::Index col = 0;
  for (const RegressionSet& s : sets) {
    all.middleCols(col, s.inputs.cols()) = s.inputs;
    col += s.inputs.cols();
    for (std::size_t k = 0; k < s.size(); ++k) {
      if (!std::isfinite(s.next_pressure[k]) || !std::isfinite(s.last_pressure[k])) {
        throw DegenerateData("non-finite training data");
      }
    }
  }
  if (!all.allFinite()) throw DegenerateData("non-finite training data");
  Normalizer norm = Normalizer::fit(all);

  std::vector<std::size_t> widths{arch.features.size()};
  for (std::size_t d = 0; d < arch.depth; ++d) widths.push_back(arch.width);
  widths.push_back(1);

  std::vector<SubModel> models;
  if (report) report->epoch_losses.assign(sets.size(), {});
  for (std::size_t s = 0; s < sets.size(); ++s) {
    SubModel model{Mlp(widths, rng), 0.0, 1.0};
    Mlp& net = model.net;
    const RegressionSet& set = sets[s];
    const std::size_t n = set.size();
    if (n > 0) {
      const Mat x = normalize_columns(set.inputs, norm);
      Vec y(static_cast<Eigen::Index>(n));
      for (std::size_t k = 0; k < n; ++k) {
        y(static_cast<Eigen::Index>(k)) = set.next_pressure[k] - set.last_pressure[k];
      }
      model.target_mean = y.mean();
      const double sd = std::sqrt((y.array() - model.target_mean).square().mean());
      model.target_scale = sd > kMinScale ? sd : 1.0;
      y = (y.array() - model.target_mean) / model.target_scale;
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      MlpGradients grads = net.zero_gradients();
      Tape tape;
      for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        const double lr = cosine_lr(hyper.lr, epoch, hyper.epochs);
        std::shuffle(order.begin(), order.end(), rng);
        double sse = 0.0;
        for (std::size_t b = 0; b < n; b += hyper.batch) {
          const std::size_t m = std::min(hyper.batch, n - b);
          Mat xb(x.rows(), static_cast<Eigen::Index>(m));
          Mat yb(1, static_cast<Eigen::Index>(m));
          for (std::size_t k = 0; k < m; ++k) {
            const auto src = static_cast<Eigen::Index>(order[b + k]);
            xb.col(static_cast<Eigen::Index>(k)) = x.col(src);
            yb(0, static_cast<Eigen::Index>(k)) = y(src);
          }
          const Mat out = net.forward(xb, &tape);
          const Mat err = out - yb;
          sse += err.squaredNorm();
          grads.set_zero();
          backward_accumulate(net, tape, err * (2.0 / static_cast<double>(m)), grads);
          sgd_step(net, grads, lr, hyper.weight_decay);
        }
        if (report) report->epoch_losses[s].push_back(sse / static_cast<double>(n));
      }
    }
    models.push_back(std::move(model));
  }
  SubModel general = std::move(models.back());
  models.pop_back();
  return SimulatorModel(arch.features, std::move(norm), std::move(models), std::move(general),
                        setting_id);
}

std::vector<double> initial_pressure_history(const Episode& ep, std::size_t length) {
  if (ep.pressures.empty()) throw EpisodeTooShort("episode has no pressures");
  std::vector<double> seq = ep.context;
  seq.push_back(ep.pressures.front());
  std::vector<double> out(length);
  for (std::size_t j = 0; j < length; ++j) {
    const auto k = static_cast<std::ptrdiff_t>(seq.size()) - static_cast<std::ptrdiff_t>(length - j);
    out[j] = seq[static_cast<std::size_t>(std::max<std::ptrdiff_t>(k, 0))];
  }
  return out;
}

SimulatorRollout simulate_episode(const SimulatorModel& model, std::span<const double> controls,
                                  std::span<const double> initial_history, bool record) {
  const SimFeaturization& feat = model.featurization();
  if (initial_history.size() != feat.pressure_history) {
    throw ShapeMismatch("initial history length differs from H_p");
  }
  SimulatorRollout r;
  r.initial_history.assign(initial_history.begin(), initial_history.end());
  r.controls.assign(controls.begin(), controls.end());
  r.pressures.reserve(controls.size() + 1);
  r.pressures.push_back(initial_history.back());
  if (record) r.tapes.resize(controls.size());
  std::vector<double> ph(initial_history.begin(), initial_history.end());
  std::vector<double> uh(feat.control_history, 0.0);
  for (std::size_t i = 0; i < controls.size(); ++i) {
    std::rotate(uh.begin(), uh.begin() + 1, uh.end());
    uh.back() = controls[i];
    const double p = model.predict(i, ph, uh, record ? &r.tapes[i] : nullptr);
    std::rotate(ph.begin(), ph.begin() + 1, ph.end());
    ph.back() = p;
    r.pressures.push_back(p);
  }
  return r;
}

std::vector<double> rollout_control_gradient(const SimulatorModel& model,
                                             const SimulatorRollout& rollout,
                                             std::span<const double> dpressures) {
  const std::size_t T = rollout.controls.size();
  if (rollout.tapes.size() != T) throw StaleTape("rollout was not recorded");
  if (dpressures.size() != T + 1) throw ShapeMismatch("need one gradient per rollout pressure");
  const std::size_t hp = model.featurization().pressure_history;
  const std::size_t hc = model.featurization().control_history;
  // p_t lives at gp[hp - 1 + t]; u_i at gu[hc - 1 + i].
  std::vector<double> gp(hp + T, 0.0);
  std::vector<double> gu(hc - 1 + T, 0.0);
  for (std::size_t t = 0; t <= T; ++t) gp[hp - 1 + t] += dpressures[t];
  for (std::size_t i = T; i-- > 0;) {
    model.predict_backward(rollout.tapes[i], gp[hp + i], std::span(gp).subspan(i, hp),
                           std::span(gu).subspan(i, hc));
  }
  return std::vector<double>(gu.begin() + static_cast<std::ptrdiff_t>(hc - 1), gu.end());
}

json to_json(const SimulatorModel& model) {
  const auto sub = [](const SubModel& m) {
    return json{{"target_mean", m.target_mean},
                {"target_scale", m.target_scale},
                {"network", to_json(m.net)}};
  };
  json boundary = json::array();
  for (const SubModel& m : model.boundary_models()) boundary.push_back(sub(m));
  return json{{"format", "ventctl-simulator"},
              {"version", kFormatVersion},
              {"setting_id", model.setting_id()},
              {"H_p", model.featurization().pressure_history},
              {"H_c", model.featurization().control_history},
              {"input_mean", model.input_normalizer().mean},
              {"input_scale", model.input_normalizer().scale},
              {"boundary", boundary},
              {"general", sub(model.general_model())}};
}

SimulatorModel simulator_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "ventctl-simulator") {
      throw ConfigInvalid("not a simulator file");
    }
    if (j.at("version").get<int>() != kFormatVersion) {
      throw ConfigInvalid("unsupported simulator format version");
    }
    SimFeaturization feat{j.at("H_p").get<std::size_t>(), j.at("H_c").get<std::size_t>()};
    Normalizer norm{j.at("input_mean").get<std::vector<double>>(),
                    j.at("input_scale").get<std::vector<double>>()};
    const auto sub = [](const json& m) {
      return SubModel{mlp_from_json(m.at("network")), m.at("target_mean").get<double>(),
                      m.at("target_scale").get<double>()};
    };
    std::vector<SubModel> boundary;
    for (const json& b : j.at("boundary")) boundary.push_back(sub(b));
    return SimulatorModel(feat, std::move(norm), std::move(boundary), sub(j.at("general")),
                          j.value("setting_id", std::string{}));
  } catch (const json::exception& e) {
    throw ConfigInvalid(std::string("malformed simulator file: ") + e.what());
  }
}

}  // namespace ventctl
