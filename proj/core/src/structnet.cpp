#include "structce/structnet.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace structce::net {

namespace {

constexpr double kDegenerateNormSq = 1e-18;  // ||w||^2 floor for fold columns

double stable_sigmoid(double s) {
  if (s >= 0.0) {
    return 1.0 / (1.0 + std::exp(-s));
  }
  double e = std::exp(s);
  return e / (1.0 + e);
}

double stable_bce(double s, double y01) {
  return std::max(s, 0.0) - s * y01 + std::log1p(std::exp(-std::abs(s)));
}

}  // namespace

void Classifier::init(int input_size, int hidden1, int hidden2, RngStream& rng) {
  if (input_size < 1 || input_size > 16 || hidden1 < 1 || hidden1 > 64 || hidden2 < 1 ||
      hidden2 > 64) {
    throw std::invalid_argument("Classifier: input must be 1..16 and hidden sizes 1..64");
  }
  input = input_size;
  h1 = hidden1;
  h2 = hidden2;
  theta.assign(num_params(), 0.0);
  double s1 = std::sqrt(2.0 / input);
  double s2 = std::sqrt(2.0 / h1);
  double s3 = std::sqrt(1.0 / h2);
  for (int i = 0; i < h1 * input; ++i) theta[off_w1() + i] = s1 * rng.next_gaussian();
  for (int i = 0; i < h2 * h1; ++i) theta[off_w2() + i] = s2 * rng.next_gaussian();
  for (int i = 0; i < h2; ++i) theta[off_w3() + i] = s3 * rng.next_gaussian();
}

double Classifier::forward(const double* features) const {
  const double* w1 = theta.data() + off_w1();
  const double* b1 = theta.data() + off_b1();
  const double* w2 = theta.data() + off_w2();
  const double* b2 = theta.data() + off_b2();
  const double* w3 = theta.data() + off_w3();
  double a1[64], a2[64];
  for (int i = 0; i < h1; ++i) {
    double acc = b1[i];
    for (int j = 0; j < input; ++j) acc += w1[i * input + j] * features[j];
    a1[i] = acc > 0.0 ? acc : 0.0;
  }
  for (int i = 0; i < h2; ++i) {
    double acc = b2[i];
    for (int j = 0; j < h1; ++j) acc += w2[i * h1 + j] * a1[j];
    a2[i] = acc > 0.0 ? acc : 0.0;
  }
  double s = theta[off_b3()];
  for (int i = 0; i < h2; ++i) s += w3[i] * a2[i];
  return s;
}

std::vector<TrainingSample> build_training_set(const Subframe& subframe, const ReceivedGrid& y) {
  const auto& cfg = subframe.cfg;
  if (cfg.pilot_scheme != phy::PilotScheme::kNonOrthogonal) {
    throw std::invalid_argument("build_training_set: requires non-orthogonal pilots");
  }
  if (y.T != cfg.symbols_per_subframe || y.K != cfg.num_subcarriers) {
    throw std::invalid_argument("build_training_set: grid dimensions disagree");
  }
  const int m = cfg.modulation.bits_per_dim;
  std::vector<TrainingSample> samples;
  samples.reserve(static_cast<std::size_t>(cfg.num_pilot_symbols()) * cfg.num_subcarriers *
                  cfg.num_streams * 2 * m);
  for (int t : cfg.pilot_symbols) {
    for (int k = 0; k < cfg.num_subcarriers; ++k) {
      for (int s = 0; s < cfg.num_streams; ++s) {
        const cd x = subframe.tx(t, k, s);
        const int label_re = x.real() >= 0.0 ? 1 : -1;
        const int label_im = x.imag() >= 0.0 ? 1 : -1;
        for (int dim = 0; dim < 2; ++dim) {
          for (int level = 0; level < m; ++level) {
            samples.push_back({k, t, s, dim, level, dim == 0 ? label_re : label_im});
          }
        }
      }
    }
  }
  return samples;
}

namespace {

// Scalar per-sample pipeline. Produces the folded vector z and, when
// requested, the bookkeeping needed to push gradients back into the channel
// layer under the straight-through convention.
struct SamplePath {
  cd shift;                 // x_i - b a e_d
  int target_col = 0;       // base complex index of the target column
  int dim = 0;
  int n_folds = 0;
  int fold_col[8];          // base complex index per folded column
  cd fold_offset[8];        // lattice offset per folded column
};

void shift_fold(const ReceivedGrid& y, const Subframe& subframe, const TrainingSample& sample,
                const StructNetParams& params, cd* z, SamplePath* path,
                double* boundary_margin) {
  const int nr = params.nr;
  const int nt = params.nt;
  const double a = params.modulation.base_amp;
  const double period = 2.0 * a;

  const cd x = subframe.tx(sample.t, sample.k, sample.stream);
  const cd target = sample.dim == 0 ? cd(sample.label * a, 0.0) : cd(0.0, sample.label * a);
  const cd shift = x - target;

  const cd* yv = y.at(sample.t, sample.k);
  const cd* wi = params.col(sample.k, sample.stream);
  for (int r = 0; r < nr; ++r) z[r] = yv[r] - wi[r] * shift;
  if (sample.dim == 1) {
    for (int r = 0; r < nr; ++r) z[r] = cd(z[r].imag(), -z[r].real());  // times -j
  }

  if (path != nullptr) {
    path->shift = shift;
    path->dim = sample.dim;
    path->target_col = static_cast<int>((static_cast<std::size_t>(sample.k) * nt +
                                         sample.stream) * nr);
    path->n_folds = 0;
  }

  for (int j = 0; j < nt; ++j) {
    if (j == sample.stream) continue;
    const cd* wj = params.col(sample.k, j);
    double nrm2 = 0.0;
    for (int r = 0; r < nr; ++r) nrm2 += std::norm(wj[r]);
    if (nrm2 <= kDegenerateNormSq) {
      throw DegenerateWeightsError("interference_fold: channel column norm below 1e-9");
    }
    cd u{0.0, 0.0};
    for (int r = 0; r < nr; ++r) u += std::conj(wj[r]) * z[r];
    u /= nrm2;
    const double fre = numerics::cmod(u.real(), period);
    const double fim = numerics::cmod(u.imag(), period);
    if (boundary_margin != nullptr) {
      *boundary_margin = std::min(*boundary_margin, std::min(a - fre, fre + a));
      *boundary_margin = std::min(*boundary_margin, std::min(a - fim, fim + a));
    }
    const cd offset = u - cd(fre, fim);
    if (offset != cd{0.0, 0.0}) {
      for (int r = 0; r < nr; ++r) z[r] -= wj[r] * offset;
    }
    if (path != nullptr) {
      path->fold_col[path->n_folds] =
          static_cast<int>((static_cast<std::size_t>(sample.k) * nt + j) * nr);
      path->fold_offset[path->n_folds] = offset;
      ++path->n_folds;
    }
  }
}

using RowMajorMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Batched loss/gradient evaluator: the shift/fold stage runs per sample, the
// classifier runs as matrix products over the whole batch.
class BatchEvaluator {
 public:
  BatchEvaluator(const ReceivedGrid& y, const Subframe& subframe) : y_(y), subframe_(subframe) {}

  // Gradients are accumulated into w_grad (2 doubles per complex weight) and
  // clf_grad when non-null; both are zeroed here.
  double evaluate(std::span<const TrainingSample> samples, const StructNetParams& params,
                  double lambda, std::vector<double>* w_grad, std::vector<double>* clf_grad) {
    const int B = static_cast<int>(samples.size());
    if (B == 0) throw std::invalid_argument("loss_and_gradients: empty batch");
    const auto& clf = params.classifier;
    const int in = clf.input;
    const int h1 = clf.h1;
    const int h2 = clf.h2;
    const double a = params.modulation.base_amp;

    features_.resize(static_cast<std::size_t>(in) * B);
    paths_.resize(B);
    std::vector<cd> z(params.nr);
    for (int b = 0; b < B; ++b) {
      shift_fold(y_, subframe_, samples[b], params, z.data(),
                 w_grad != nullptr ? &paths_[b] : nullptr, nullptr);
      double* f = &features_[static_cast<std::size_t>(b) * in];
      for (int r = 0; r < params.nr; ++r) {
        f[2 * r] = z[r].real() / a;
        f[2 * r + 1] = z[r].imag() / a;
      }
    }

    Eigen::Map<const Eigen::MatrixXd> F(features_.data(), in, B);
    Eigen::Map<const RowMajorMat> W1(clf.theta.data() + clf.off_w1(), h1, in);
    Eigen::Map<const Eigen::VectorXd> B1(clf.theta.data() + clf.off_b1(), h1);
    Eigen::Map<const RowMajorMat> W2(clf.theta.data() + clf.off_w2(), h2, h1);
    Eigen::Map<const Eigen::VectorXd> B2(clf.theta.data() + clf.off_b2(), h2);
    Eigen::Map<const Eigen::VectorXd> W3(clf.theta.data() + clf.off_w3(), h2);

    h1_.resize(h1, B);
    h2_.resize(h2, B);
    logits_.resize(B);
    h1_.noalias() = W1 * F;
    h1_.colwise() += B1;
    h1_ = h1_.cwiseMax(0.0);
    h2_.noalias() = W2 * h1_;
    h2_.colwise() += B2;
    h2_ = h2_.cwiseMax(0.0);
    logits_.noalias() = h2_.transpose() * W3;
    logits_.array() += clf.theta[clf.off_b3()];

    double loss = 0.0;
    gs_.resize(B);
    for (int b = 0; b < B; ++b) {
      const double y01 = samples[b].label > 0 ? 1.0 : 0.0;
      loss += stable_bce(logits_(b), y01);
      gs_(b) = (stable_sigmoid(logits_(b)) - y01) / B;
    }
    loss /= B;

    if (lambda != 0.0) loss += lambda * smoothness_penalty(params);
    if (w_grad == nullptr) return loss;

    w_grad->assign(2 * params.w.size(), 0.0);
    clf_grad->assign(clf.theta.size(), 0.0);

    // Classifier backward as batch products.
    g2_.resize(h2, B);
    g1_.resize(h1, B);
    g2_.noalias() = W3 * gs_.transpose();
    g2_ = (h2_.array() > 0.0).select(g2_, 0.0);
    g1_.noalias() = W2.transpose() * g2_;
    g1_ = (h1_.array() > 0.0).select(g1_, 0.0);

    Eigen::Map<RowMajorMat> gW1(clf_grad->data() + clf.off_w1(), h1, in);
    Eigen::Map<Eigen::VectorXd> gB1(clf_grad->data() + clf.off_b1(), h1);
    Eigen::Map<RowMajorMat> gW2(clf_grad->data() + clf.off_w2(), h2, h1);
    Eigen::Map<Eigen::VectorXd> gB2(clf_grad->data() + clf.off_b2(), h2);
    Eigen::Map<Eigen::VectorXd> gW3(clf_grad->data() + clf.off_w3(), h2);
    gW1.noalias() = g1_ * F.transpose();
    gB1 = g1_.rowwise().sum();
    gW2.noalias() = g2_ * h1_.transpose();
    gB2 = g2_.rowwise().sum();
    gW3.noalias() = h2_ * gs_;
    (*clf_grad)[clf.off_b3()] = gs_.sum();

    gf_.resize(in, B);
    gf_.noalias() = W1.transpose() * g1_;

    // Channel-layer backward: straight-through through the folds, exact
    // through the rotation and shift.
    double* gw = w_grad->data();
    for (int b = 0; b < B; ++b) {
      const SamplePath& p = paths_[b];
      for (int r = 0; r < params.nr; ++r) {
        cd gz(gf_(2 * r, b) / a, gf_(2 * r + 1, b) / a);
        for (int f = 0; f < p.n_folds; ++f) {
          const cd g = -std::conj(p.fold_offset[f]) * gz;
          gw[2 * (p.fold_col[f] + r)] += g.real();
          gw[2 * (p.fold_col[f] + r) + 1] += g.imag();
        }
        const cd gr0 = p.dim == 1 ? cd(-gz.imag(), gz.real()) : gz;  // times e^{+j theta}
        const cd g = -std::conj(p.shift) * gr0;
        gw[2 * (p.target_col + r)] += g.real();
        gw[2 * (p.target_col + r) + 1] += g.imag();
      }
    }

    if (lambda != 0.0) add_smoothness_grad(params, lambda, *w_grad);
    return loss;
  }

 private:
  static double smoothness_penalty(const StructNetParams& params) {
    double acc = 0.0;
    const int stride = params.nr * params.nt;
    for (int k = 0; k + 1 < params.num_columns(); ++k) {
      const cd* wk = params.w.data() + static_cast<std::size_t>(k) * stride;
      for (int i = 0; i < stride; ++i) acc += std::norm(wk[i + stride] - wk[i]);
    }
    return acc;
  }

  static void add_smoothness_grad(const StructNetParams& params, double lambda,
                                  std::vector<double>& w_grad) {
    const int stride = params.nr * params.nt;
    const int kp = params.num_columns();
    for (int k = 0; k < kp; ++k) {
      const cd* wk = params.w.data() + static_cast<std::size_t>(k) * stride;
      double* g = w_grad.data() + 2 * static_cast<std::size_t>(k) * stride;
      for (int i = 0; i < stride; ++i) {
        cd acc{0.0, 0.0};
        if (k > 0) acc += wk[i] - wk[i - stride];
        if (k + 1 < kp) acc += wk[i] - wk[i + stride];
        g[2 * i] += 2.0 * lambda * acc.real();
        g[2 * i + 1] += 2.0 * lambda * acc.imag();
      }
    }
  }

  const ReceivedGrid& y_;
  const Subframe& subframe_;
  std::vector<double> features_;
  std::vector<SamplePath> paths_;
  Eigen::MatrixXd h1_, h2_, g1_, g2_, gf_;
  Eigen::VectorXd logits_, gs_;
};

}  // namespace

CVec channel_shift(const ReceivedGrid& y, const Subframe& subframe, const TrainingSample& sample,
                   const StructNetParams& params) {
  CVec r(params.nr);
  const cd x = subframe.tx(sample.t, sample.k, sample.stream);
  const double a = params.modulation.base_amp;
  const cd target = sample.dim == 0 ? cd(sample.label * a, 0.0) : cd(0.0, sample.label * a);
  const cd shift = x - target;
  const cd* yv = y.at(sample.t, sample.k);
  const cd* wi = params.col(sample.k, sample.stream);
  for (int i = 0; i < params.nr; ++i) r(i) = yv[i] - wi[i] * shift;
  if (sample.dim == 1) {
    for (int i = 0; i < params.nr; ++i) r(i) = cd(r(i).imag(), -r(i).real());
  }
  return r;
}

CVec interference_fold(const CVec& r, const StructNetParams& params, int col,
                       int target_stream) {
  CVec z = r;
  const double a = params.modulation.base_amp;
  const double period = 2.0 * a;
  for (int j = 0; j < params.nt; ++j) {
    if (j == target_stream) continue;
    const cd* wj = params.col(col, j);
    double nrm2 = 0.0;
    for (int i = 0; i < params.nr; ++i) nrm2 += std::norm(wj[i]);
    if (nrm2 <= kDegenerateNormSq) {
      throw DegenerateWeightsError("interference_fold: channel column norm below 1e-9");
    }
    cd u{0.0, 0.0};
    for (int i = 0; i < params.nr; ++i) u += std::conj(wj[i]) * z(i);
    u /= nrm2;
    const cd folded(numerics::cmod(u.real(), period), numerics::cmod(u.imag(), period));
    const cd offset = u - folded;
    if (offset != cd{0.0, 0.0}) {
      for (int i = 0; i < params.nr; ++i) z(i) -= wj[i] * offset;
    }
  }
  return z;
}

double forward(const ReceivedGrid& y, const Subframe& subframe, const TrainingSample& sample,
               const StructNetParams& params) {
  std::vector<cd> z(params.nr);
  shift_fold(y, subframe, sample, params, z.data(), nullptr, nullptr);
  const double a = params.modulation.base_amp;
  double features[16] = {0};
  for (int r = 0; r < params.nr; ++r) {
    features[2 * r] = z[r].real() / a;
    features[2 * r + 1] = z[r].imag() / a;
  }
  return params.classifier.forward(features);
}

LossGrad loss_and_gradients(const ReceivedGrid& y, const Subframe& subframe,
                            std::span<const TrainingSample> samples,
                            const StructNetParams& params, double lambda) {
  BatchEvaluator ev(y, subframe);
  std::vector<double> w_grad, clf_grad;
  LossGrad out;
  out.loss = ev.evaluate(samples, params, lambda, &w_grad, &clf_grad);
  out.grad.reserve(w_grad.size() + clf_grad.size());
  out.grad.insert(out.grad.end(), w_grad.begin(), w_grad.end());
  out.grad.insert(out.grad.end(), clf_grad.begin(), clf_grad.end());
  return out;
}

int num_params(const StructNetParams& params) {
  return static_cast<int>(2 * params.w.size()) + params.classifier.num_params();
}

std::vector<double> flatten_params(const StructNetParams& params) {
  std::vector<double> theta;
  theta.reserve(num_params(params));
  for (const cd& v : params.w) {
    theta.push_back(v.real());
    theta.push_back(v.imag());
  }
  theta.insert(theta.end(), params.classifier.theta.begin(), params.classifier.theta.end());
  return theta;
}

void unflatten_params(std::span<const double> theta, StructNetParams& params) {
  if (theta.size() != static_cast<std::size_t>(num_params(params))) {
    throw std::invalid_argument("unflatten_params: size mismatch");
  }
  for (std::size_t i = 0; i < params.w.size(); ++i) {
    params.w[i] = cd(theta[2 * i], theta[2 * i + 1]);
  }
  std::copy(theta.begin() + 2 * params.w.size(), theta.end(), params.classifier.theta.begin());
}

double min_fold_boundary_margin(const ReceivedGrid& y, const Subframe& subframe,
                                std::span<const TrainingSample> samples,
                                const StructNetParams& params) {
  double margin = std::numeric_limits<double>::infinity();
  std::vector<cd> z(params.nr);
  for (const auto& s : samples) {
    shift_fold(y, subframe, s, params, z.data(), nullptr, &margin);
  }
  return margin;
}

namespace {

struct AdamState {
  std::vector<double> m, v;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

void adam_update(double* p, const double* g, AdamState& st, std::size_t n, double lr, double b1,
                 double b2, double eps, int t) {
  const double bc1 = 1.0 - std::pow(b1, t);
  const double bc2 = 1.0 - std::pow(b2, t);
  for (std::size_t i = 0; i < n; ++i) {
    st.m[i] = b1 * st.m[i] + (1.0 - b1) * g[i];
    st.v[i] = b2 * st.v[i] + (1.0 - b2) * g[i] * g[i];
    p[i] -= lr * (st.m[i] / bc1) / (std::sqrt(st.v[i] / bc2) + eps);
  }
}

void momentum_sgd_update(double* p, const double* g, AdamState& st, std::size_t n, double lr,
                         double b1, int t) {
  const double bc1 = 1.0 - std::pow(b1, t);
  for (std::size_t i = 0; i < n; ++i) {
    st.m[i] = b1 * st.m[i] + (1.0 - b1) * g[i];
    p[i] -= lr * (st.m[i] / bc1);
  }
}

StructNetParams init_params(const ReceivedGrid& y, const Subframe& subframe,
                            const TrainConfig& cfg, RngStream rng) {
  const auto& sc = subframe.cfg;
  StructNetParams params;
  params.nr = y.nr;
  params.nt = sc.num_streams;
  params.modulation = sc.modulation;
  params.pilot_subcarriers = subframe.pilot_subcarriers(0);
  params.w.assign(static_cast<std::size_t>(params.num_columns()) * params.nt * params.nr,
                  cd{0.0, 0.0});
  params.classifier.init(2 * params.nr, cfg.hidden1, cfg.hidden2, rng);

  bool random_init = cfg.init == TrainConfig::Init::kSmallRandom;
  if (!random_init) {
    try {
      auto est = estimators::stacked_ls(y, subframe);
      for (int k = 0; k < params.num_columns(); ++k) {
        for (int s = 0; s < params.nt; ++s) {
          cd* col = params.col(k, s);
          for (int r = 0; r < params.nr; ++r) col[r] = est.at(r, s, 0, k);
        }
      }
    } catch (const SingularMatrixError&) {
      random_init = true;  // degenerate pilot draw, start from noise instead
    }
  }
  if (random_init) {
    for (cd& v : params.w) v = rng.next_cgaussian(1e-4);  // std 0.01
  }
  return params;
}

}  // namespace

TrainResult train_subframe(const ReceivedGrid& y, const Subframe& subframe,
                           const TrainConfig& cfg, RngStream& rng) {
  const auto t0 = std::chrono::steady_clock::now();
  if (subframe.cfg.pilot_scheme != phy::PilotScheme::kNonOrthogonal) {
    throw std::invalid_argument("train_subframe: requires non-orthogonal pilots");
  }
  if (cfg.epochs < 0 || cfg.batch_size < 1) {
    throw std::invalid_argument("train_subframe: bad epoch or batch settings");
  }

  const auto samples = build_training_set(subframe, y);
  BatchEvaluator evaluator(y, subframe);

  TrainResult out;
  bool trained = false;
  int attempt = 0;
  for (; attempt <= cfg.max_restarts && !trained; ++attempt) {
    StructNetParams params = init_params(y, subframe, cfg, rng.substream(100 + attempt));
    RngStream order_rng = rng.substream(200 + attempt);

    std::vector<std::size_t> perm(samples.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::vector<TrainingSample> batch;
    batch.reserve(cfg.batch_size);
    std::vector<double> w_grad, clf_grad;
    AdamState adam_w(2 * params.w.size());
    AdamState adam_c(params.classifier.theta.size());
    int step = 0;

    try {
      for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        order_rng.shuffle(perm);
        for (std::size_t start = 0; start < perm.size(); start += cfg.batch_size) {
          const std::size_t end = std::min(perm.size(), start + cfg.batch_size);
          batch.clear();
          for (std::size_t i = start; i < end; ++i) batch.push_back(samples[perm[i]]);
          evaluator.evaluate(batch, params, cfg.smoothness_lambda, &w_grad, &clf_grad);
          ++step;
          if (cfg.channel_opt == TrainConfig::ChannelOpt::kAdam) {
            adam_update(reinterpret_cast<double*>(params.w.data()), w_grad.data(), adam_w,
                        2 * params.w.size(), cfg.lr_channel, cfg.adam_beta1, cfg.adam_beta2,
                        cfg.adam_eps, step);
          } else {
            momentum_sgd_update(reinterpret_cast<double*>(params.w.data()), w_grad.data(),
                                adam_w, 2 * params.w.size(), cfg.lr_channel, cfg.adam_beta1,
                                step);
          }
          adam_update(params.classifier.theta.data(), clf_grad.data(), adam_c,
                      params.classifier.theta.size(), cfg.lr_classifier, cfg.adam_beta1,
                      cfg.adam_beta2, cfg.adam_eps, step);
        }
      }
      out.params = std::move(params);
      out.stats.epochs_run = cfg.epochs;
      trained = true;
    } catch (const DegenerateWeightsError&) {
      // restart with a fresh draw
    }
  }
  out.stats.restarts = attempt - 1;

  if (!trained) {
    // Training never survived a full pass; serve the stacked least-squares
    // solution so the caller always has an estimate.
    TrainConfig fb = cfg;
    fb.init = TrainConfig::Init::kStackedLs;
    out.params = init_params(y, subframe, fb, rng.substream(999));
    out.stats.fell_back = true;
  }

  out.stats.final_loss =
      evaluator.evaluate(samples, out.params, cfg.smoothness_lambda, nullptr, nullptr);
  out.stats.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

estimators::ChannelEstimate extract_channel(const StructNetParams& params,
                                            const SubframeConfig& cfg) {
  std::vector<std::vector<int>> lists(params.nt, params.pilot_subcarriers);
  auto pilots = estimators::PilotEstimates::zeros(params.nr, params.nt, cfg.pilot_symbols,
                                                  std::move(lists));
  for (int k = 0; k < params.num_columns(); ++k) {
    for (int s = 0; s < params.nt; ++s) {
      const cd* col = params.col(k, s);
      for (int r = 0; r < params.nr; ++r) {
        for (int ti = 0; ti < pilots.num_pilot_symbols(); ++ti) {
          pilots.at(r, s, ti, k) = col[r];
        }
      }
    }
  }
  return estimators::assemble_estimate(std::move(pilots), "structnet-ce",
                                       cfg.symbols_per_subframe, cfg.num_subcarriers, 0.0);
}

std::vector<std::vector<std::uint8_t>> detect_data(const ReceivedGrid& y,
                                                   const Subframe& subframe,
                                                   const StructNetParams& params, double sigma2,
                                                   DetectMode mode) {
  const auto& cfg = subframe.cfg;
  if (mode == DetectMode::kEqualizer) {
    auto est = extract_channel(params, cfg);
    auto xhat = phy::mmse_equalize(y, est.grid, sigma2);
    return phy::demap_data_bits(xhat, cfg);
  }

  if (params.modulation.order > 4) {
    throw UnsupportedModeError("detect_data: classifier path supports QPSK only");
  }
  std::vector<int> col_of_k(cfg.num_subcarriers, -1);
  for (int c = 0; c < params.num_columns(); ++c) col_of_k[params.pilot_subcarriers[c]] = c;
  for (int k = 0; k < cfg.num_subcarriers; ++k) {
    if (col_of_k[k] < 0) {
      throw UnsupportedModeError("detect_data: classifier path needs full-band channel columns");
    }
  }

  const int nr = params.nr;
  const double a = params.modulation.base_amp;
  const double period = 2.0 * a;
  std::vector<std::vector<std::uint8_t>> bits(cfg.num_streams);
  std::vector<cd> z(nr);
  double features[16];

  // Folds the interfering streams and evaluates the shared classifier, as in
  // training. `dim` selects the detected dimension, `orth` is the
  // hypothesized level of the other dimension, which the shift removes the
  // way the known pilot level is removed during training.
  auto logit_for = [&](const cd* yv, int col, int s, int dim, double orth) {
    const cd removed = dim == 0 ? cd(0.0, orth) : cd(orth, 0.0);
    const cd* ws = params.col(col, s);
    for (int r = 0; r < nr; ++r) {
      const cd v = yv[r] - ws[r] * removed;
      z[r] = dim == 1 ? cd(v.imag(), -v.real()) : v;
    }
    for (int j = 0; j < cfg.num_streams; ++j) {
      if (j == s) continue;
      const cd* wj = params.col(col, j);
      double nrm2 = 0.0;
      for (int r = 0; r < nr; ++r) nrm2 += std::norm(wj[r]);
      if (nrm2 <= kDegenerateNormSq) {
        throw DegenerateWeightsError("detect_data: degenerate channel column");
      }
      cd u{0.0, 0.0};
      for (int r = 0; r < nr; ++r) u += std::conj(wj[r]) * z[r];
      u /= nrm2;
      const cd offset(u.real() - numerics::cmod(u.real(), period),
                      u.imag() - numerics::cmod(u.imag(), period));
      for (int r = 0; r < nr; ++r) z[r] -= wj[r] * offset;
    }
    for (int r = 0; r < nr; ++r) {
      features[2 * r] = z[r].real() / a;
      features[2 * r + 1] = z[r].imag() / a;
    }
    return params.classifier.forward(features);
  };
  auto log_sigmoid = [](double x) { return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x))); };

  for (int t = 0; t < cfg.symbols_per_subframe; ++t) {
    if (cfg.is_pilot_symbol(t)) continue;
    for (int k = 0; k < cfg.num_subcarriers; ++k) {
      const int col = col_of_k[k];
      const cd* yv = y.at(t, k);
      for (int s = 0; s < cfg.num_streams; ++s) {
        // One binary task per (dimension, hypothesized other-dimension
        // level); the joint symbol maximizes the summed log-likelihood.
        double logit_re[2], logit_im[2];  // index 0 -> orth level -a, 1 -> +a
        for (int h = 0; h < 2; ++h) {
          const double orth = h == 0 ? -a : a;
          logit_re[h] = logit_for(yv, col, s, 0, orth);
          logit_im[h] = logit_for(yv, col, s, 1, orth);
        }
        double best = -std::numeric_limits<double>::infinity();
        int best_re = 1, best_im = 1;
        for (int bre = 0; bre < 2; ++bre) {
          for (int bim = 0; bim < 2; ++bim) {
            const double sre = (bre == 1 ? 1.0 : -1.0) * logit_re[bim];
            const double sim = (bim == 1 ? 1.0 : -1.0) * logit_im[bre];
            const double score = log_sigmoid(sre) + log_sigmoid(sim);
            if (score > best) {
              best = score;
              best_re = bre;
              best_im = bim;
            }
          }
        }
        bits[s].push_back(static_cast<std::uint8_t>(best_re));
        bits[s].push_back(static_cast<std::uint8_t>(best_im));
      }
    }
  }
  return bits;
}

namespace {

constexpr char kMagic[4] = {'S', 'N', 'C', 'E'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
}

}  // namespace

void save_params(const StructNetParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_params: cannot open " + path);
  out.write(kMagic, 4);
  write_pod(out, kFormatVersion);
  write_pod(out, static_cast<std::int32_t>(params.nr));
  write_pod(out, static_cast<std::int32_t>(params.nt));
  write_pod(out, static_cast<std::int32_t>(params.num_columns()));
  write_pod(out, static_cast<std::int32_t>(params.classifier.input));
  write_pod(out, static_cast<std::int32_t>(params.classifier.h1));
  write_pod(out, static_cast<std::int32_t>(params.classifier.h2));
  write_pod(out, static_cast<std::int32_t>(params.modulation.order));
  for (int k : params.pilot_subcarriers) write_pod(out, static_cast<std::int32_t>(k));
  for (const cd& v : params.w) {
    write_pod(out, v.real());
    write_pod(out, v.imag());
  }
  for (double v : params.classifier.theta) write_pod(out, v);
  if (!out) throw std::runtime_error("save_params: write failed for " + path);
}

StructNetParams load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_params: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  std::uint32_t version = 0;
  read_pod(in, version);
  if (!in || std::memcmp(magic, kMagic, 4) != 0 || version != kFormatVersion) {
    throw std::runtime_error("load_params: bad header in " + path);
  }
  std::int32_t nr = 0, nt = 0, kp = 0, input = 0, h1 = 0, h2 = 0, order = 0;
  read_pod(in, nr);
  read_pod(in, nt);
  read_pod(in, kp);
  read_pod(in, input);
  read_pod(in, h1);
  read_pod(in, h2);
  read_pod(in, order);
  if (!in || nr < 1 || nt < 1 || kp < 1 || input < 1 || h1 < 1 || h2 < 1) {
    throw std::runtime_error("load_params: bad dimensions in " + path);
  }
  StructNetParams params;
  params.nr = nr;
  params.nt = nt;
  params.modulation = ModulationScheme::from_order(order);
  params.pilot_subcarriers.resize(kp);
  for (int i = 0; i < kp; ++i) {
    std::int32_t k = 0;
    read_pod(in, k);
    params.pilot_subcarriers[i] = k;
  }
  params.w.resize(static_cast<std::size_t>(kp) * nt * nr);
  for (cd& v : params.w) {
    double re = 0, im = 0;
    read_pod(in, re);
    read_pod(in, im);
    v = cd(re, im);
  }
  params.classifier.input = input;
  params.classifier.h1 = h1;
  params.classifier.h2 = h2;
  params.classifier.theta.resize(params.classifier.num_params());
  for (double& v : params.classifier.theta) read_pod(in, v);
  if (!in) throw std::runtime_error("load_params: truncated file " + path);
  return params;
}

}  // namespace structce::net
