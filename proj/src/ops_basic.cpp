#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "tsc/autodiff.hpp"
#include "tsc/error.hpp"

namespace tsc::ad {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutableMap = Eigen::Map<RowMatrix>;

// Views any [B, C, T] / [C, T] tensor as (batch, channels, time).
struct Bct {
  std::size_t b, c, t;
};

Bct as_bct(const Tensor& x, const char* op) {
  if (x.rank() == 3) return {x.dim(0), x.dim(1), x.dim(2)};
  if (x.rank() == 2) return {1, x.dim(0), x.dim(1)};
  throw ShapeError(op, "input", "expected [C, T] or [B, C, T], got " + shape_string(x.shape()));
}

void require_vector(const Tensor& t, std::size_t n, const char* op, const char* axis) {
  if (t.rank() != 1 || t.dim(0) != n) {
    throw ShapeError(op, axis, "expected [" + std::to_string(n) + "], got " + shape_string(t.shape()));
  }
}

}  // namespace

Var batch_norm1d(Var x, Var gamma, Var beta, RunningStats& stats, Mode mode, BatchNormOptions options) {
  const Tensor& xv = x.value();
  const Bct d = as_bct(xv, "batch_norm1d");
  if (xv.rank() != 3 || d.b == 0) throw ShapeError("batch_norm1d", "batch", "needs a non-empty [B, C, T] batch");
  require_vector(gamma.value(), d.c, "batch_norm1d", "gamma");
  require_vector(beta.value(), d.c, "batch_norm1d", "beta");
  if (options.epsilon <= 0) throw UsageError("batch_norm1d: epsilon must be positive");
  const std::size_t count = d.b * d.t;

  std::vector<double> mean(d.c), inv_std(d.c);
  if (mode == Mode::train) {
    std::vector<double> var(d.c);
    for (std::size_t c = 0; c < d.c; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < d.b; ++b) {
        const double* p = xv.raw() + (b * d.c + c) * d.t;
        for (std::size_t t = 0; t < d.t; ++t) s += p[t];
      }
      mean[c] = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t b = 0; b < d.b; ++b) {
        const double* p = xv.raw() + (b * d.c + c) * d.t;
        for (std::size_t t = 0; t < d.t; ++t) {
          const double z = p[t] - mean[c];
          ss += z * z;
        }
      }
      var[c] = ss / static_cast<double>(count);
      inv_std[c] = 1.0 / std::sqrt(var[c] + options.epsilon);
    }
    if (options.update_running) {
      require_vector(stats.mean, d.c, "batch_norm1d", "running_mean");
      require_vector(stats.var, d.c, "batch_norm1d", "running_var");
      const double unbias = count > 1 ? static_cast<double>(count) / static_cast<double>(count - 1) : 1.0;
      for (std::size_t c = 0; c < d.c; ++c) {
        stats.mean[c] = (1.0 - options.momentum) * stats.mean[c] + options.momentum * mean[c];
        stats.var[c] = (1.0 - options.momentum) * stats.var[c] + options.momentum * var[c] * unbias;
      }
    }
  } else {
    require_vector(stats.mean, d.c, "batch_norm1d", "running_mean");
    require_vector(stats.var, d.c, "batch_norm1d", "running_var");
    for (std::size_t c = 0; c < d.c; ++c) {
      mean[c] = stats.mean[c];
      inv_std[c] = 1.0 / std::sqrt(stats.var[c] + options.epsilon);
    }
  }

  const double* g = gamma.value().raw();
  const double* bt = beta.value().raw();
  Tensor xhat(xv.shape());
  Tensor out(xv.shape());
  for (std::size_t b = 0; b < d.b; ++b) {
    for (std::size_t c = 0; c < d.c; ++c) {
      const std::size_t off = (b * d.c + c) * d.t;
      for (std::size_t t = 0; t < d.t; ++t) {
        const double h = (xv[off + t] - mean[c]) * inv_std[c];
        xhat[off + t] = h;
        out[off + t] = g[c] * h + bt[c];
      }
    }
  }

  const Tensor* gamma_value = &gamma.value();
  const bool batch_stats = mode == Mode::train;
  return x.tape().record(
      std::move(out), {x, gamma, beta},
      [d, count, batch_stats, inv_std = std::move(inv_std), xhat = std::move(xhat), gamma_value](
          const Tensor& og, std::span<Tensor* const> grads) {
        std::vector<double> sum_dy(d.c, 0.0), sum_dy_xhat(d.c, 0.0);
        for (std::size_t b = 0; b < d.b; ++b) {
          for (std::size_t c = 0; c < d.c; ++c) {
            const std::size_t off = (b * d.c + c) * d.t;
            for (std::size_t t = 0; t < d.t; ++t) {
              sum_dy[c] += og[off + t];
              sum_dy_xhat[c] += og[off + t] * xhat[off + t];
            }
          }
        }
        if (grads[1]) {
          for (std::size_t c = 0; c < d.c; ++c) (*grads[1])[c] += sum_dy_xhat[c];
        }
        if (grads[2]) {
          for (std::size_t c = 0; c < d.c; ++c) (*grads[2])[c] += sum_dy[c];
        }
        if (grads[0]) {
          const double* gm = gamma_value->raw();
          const double n = static_cast<double>(count);
          for (std::size_t b = 0; b < d.b; ++b) {
            for (std::size_t c = 0; c < d.c; ++c) {
              const std::size_t off = (b * d.c + c) * d.t;
              const double k = gm[c] * inv_std[c];
              for (std::size_t t = 0; t < d.t; ++t) {
                const double dy = og[off + t];
                (*grads[0])[off + t] +=
                    batch_stats ? k * (dy - sum_dy[c] / n - xhat[off + t] * sum_dy_xhat[c] / n) : k * dy;
              }
            }
          }
        }
      });
}

Var relu(Var x) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  const Tensor* input = &xv;
  return x.tape().record(std::move(out), {x}, [input](const Tensor& og, std::span<Tensor* const> grads) {
    Tensor& dx = *grads[0];
    for (std::size_t i = 0; i < og.size(); ++i) {
      if ((*input)[i] > 0.0) dx[i] += og[i];
    }
  });
}

Var max_pool1d(Var x, std::size_t window, std::size_t stride, Padding padding) {
  const Tensor& xv = x.value();
  const Bct d = as_bct(xv, "max_pool1d");
  if (window == 0) throw ShapeError("max_pool1d", "window", "window must be at least 1");
  if (stride == 0) throw ShapeError("max_pool1d", "stride", "stride must be positive");
  std::size_t out_len;
  std::ptrdiff_t pad_left = 0;
  if (padding == Padding::same) {
    if (stride != 1) throw ShapeError("max_pool1d", "stride", "same padding requires stride 1");
    out_len = d.t;
    pad_left = static_cast<std::ptrdiff_t>((window - 1) / 2);
  } else {
    if (d.t < window) throw ShapeError("max_pool1d", "time", "series shorter than the pooling window");
    out_len = (d.t - window) / stride + 1;
  }
  Shape shape = xv.shape();
  shape.back() = out_len;
  Tensor out(shape);
  std::vector<std::size_t> arg(out.size());
  for (std::size_t row = 0; row < d.b * d.c; ++row) {
    const double* src = xv.raw() + row * d.t;
    for (std::size_t t = 0; t < out_len; ++t) {
      double best = -std::numeric_limits<double>::infinity();
      std::size_t where = 0;
      for (std::size_t k = 0; k < window; ++k) {
        const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t * stride + k) - pad_left;
        if (s < 0 || s >= static_cast<std::ptrdiff_t>(d.t)) continue;
        if (src[s] > best) {
          best = src[s];
          where = static_cast<std::size_t>(s);
        }
      }
      out[row * out_len + t] = best;
      arg[row * out_len + t] = row * d.t + where;
    }
  }
  return x.tape().record(std::move(out), {x},
                         [arg = std::move(arg)](const Tensor& og, std::span<Tensor* const> grads) {
                           for (std::size_t i = 0; i < og.size(); ++i) (*grads[0])[arg[i]] += og[i];
                         });
}

Var global_avg_pool(Var x) {
  const Tensor& xv = x.value();
  const Bct d = as_bct(xv, "global_avg_pool");
  Tensor out(xv.rank() == 3 ? Shape{d.b, d.c} : Shape{d.c});
  const double inv = 1.0 / static_cast<double>(d.t);
  for (std::size_t row = 0; row < d.b * d.c; ++row) {
    double s = 0.0;
    const double* p = xv.raw() + row * d.t;
    for (std::size_t t = 0; t < d.t; ++t) s += p[t];
    out[row] = s * inv;
  }
  return x.tape().record(std::move(out), {x}, [d, inv](const Tensor& og, std::span<Tensor* const> grads) {
    for (std::size_t row = 0; row < d.b * d.c; ++row) {
      double* p = grads[0]->raw() + row * d.t;
      const double g = og[row] * inv;
      for (std::size_t t = 0; t < d.t; ++t) p[t] += g;
    }
  });
}

Var dense(Var x, Var w, Var b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.rank() != 2) throw ShapeError("dense", "input", "expected [B, F], got " + shape_string(xv.shape()));
  if (wv.rank() != 2) throw ShapeError("dense", "weight", "expected [K, F], got " + shape_string(wv.shape()));
  const std::size_t batch = xv.dim(0), features = xv.dim(1), units = wv.dim(0);
  if (wv.dim(1) != features) {
    throw ShapeError("dense", "features", "input has " + std::to_string(features) + " features, weight expects " +
                                              std::to_string(wv.dim(1)));
  }
  require_vector(b.value(), units, "dense", "bias");

  Tensor out(Shape{batch, units});
  MutableMap om(out.raw(), batch, units);
  om.noalias() = ConstMap(xv.raw(), batch, features) * ConstMap(wv.raw(), units, features).transpose();
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t k = 0; k < units; ++k) om(i, k) += b.value()[k];
  }
  const Tensor* input = &xv;
  const Tensor* weights = &wv;
  return x.tape().record(std::move(out), {x, w, b},
                         [input, weights, batch, features, units](const Tensor& og, std::span<Tensor* const> grads) {
                           const ConstMap g(og.raw(), batch, units);
                           if (grads[0]) {
                             MutableMap dx(grads[0]->raw(), batch, features);
                             dx.noalias() += g * ConstMap(weights->raw(), units, features);
                           }
                           if (grads[1]) {
                             MutableMap dw(grads[1]->raw(), units, features);
                             dw.noalias() += g.transpose() * ConstMap(input->raw(), batch, features);
                           }
                           if (grads[2]) {
                             for (std::size_t i = 0; i < batch; ++i) {
                               for (std::size_t k = 0; k < units; ++k) (*grads[2])[k] += g(i, k);
                             }
                           }
                         });
}

Var softmax(Var logits) {
  const Tensor& z = logits.value();
  if (z.rank() != 1 && z.rank() != 2) {
    throw ShapeError("softmax", "input", "expected [K] or [B, K], got " + shape_string(z.shape()));
  }
  const std::size_t k = z.shape().back();
  const std::size_t rows = z.size() / k;
  Tensor p(z.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = z.raw() + r * k;
    double* out = p.raw() + r * k;
    const double m = *std::max_element(in, in + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      out[j] = std::exp(in[j] - m);
      s += out[j];
    }
    for (std::size_t j = 0; j < k; ++j) out[j] /= s;
  }
  Tensor saved = p;
  return logits.tape().record(std::move(p), {logits},
                              [saved = std::move(saved), rows, k](const Tensor& og, std::span<Tensor* const> grads) {
                                for (std::size_t r = 0; r < rows; ++r) {
                                  const double* pr = saved.raw() + r * k;
                                  const double* g = og.raw() + r * k;
                                  double dot = 0.0;
                                  for (std::size_t j = 0; j < k; ++j) dot += g[j] * pr[j];
                                  double* dx = grads[0]->raw() + r * k;
                                  for (std::size_t j = 0; j < k; ++j) dx[j] += pr[j] * (g[j] - dot);
                                }
                              });
}

Var dropout(Var x, double rate, Mode mode, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw UsageError("dropout: rate must lie in [0, 1)");
  if (mode == Mode::eval || rate == 0.0) return x;
  const Tensor& xv = x.value();
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor mask(xv.shape());
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    mask[i] = rng.uniform() >= rate ? keep_scale : 0.0;
    out[i] = xv[i] * mask[i];
  }
  return x.tape().record(std::move(out), {x},
                         [mask = std::move(mask)](const Tensor& og, std::span<Tensor* const> grads) {
                           for (std::size_t i = 0; i < og.size(); ++i) (*grads[0])[i] += og[i] * mask[i];
                         });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(out), {x}, [](const Tensor& og, std::span<Tensor* const> grads) {
    for (std::size_t i = 0; i < og.size(); ++i) (*grads[0])[i] += og[i];
  });
}

Var add(Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add", "shape", shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  Tensor out = a.value();
  out += b.value();
  return a.tape().record(std::move(out), {a, b}, [](const Tensor& og, std::span<Tensor* const> grads) {
    for (Tensor* g : grads) {
      if (g) *g += og;
    }
  });
}

Var scale(Var x, double factor) {
  Tensor out = x.value();
  for (auto& v : out.data()) v *= factor;
  return x.tape().record(std::move(out), {x}, [factor](const Tensor& og, std::span<Tensor* const> grads) {
    for (std::size_t i = 0; i < og.size(); ++i) (*grads[0])[i] += factor * og[i];
  });
}

Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels", "parts", "nothing to concatenate");
  const Shape& first = parts.front().shape();
  if (first.size() != 3) throw ShapeError("concat_channels", "input", "expected [B, C, T] parts");
  const std::size_t batch = first[0], length = first[2];
  std::vector<std::size_t> channels;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != 3 || s[0] != batch) throw ShapeError("concat_channels", "batch", shape_string(s));
    if (s[2] != length) throw ShapeError("concat_channels", "time", shape_string(s));
    channels.push_back(s[1]);
    total += s[1];
  }
  Tensor out(Shape{batch, total, length});
  for (std::size_t b = 0; b < batch; ++b) {
    std::size_t offset = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const double* src = parts[i].value().raw() + b * channels[i] * length;
      std::copy(src, src + channels[i] * length, out.raw() + (b * total + offset) * length);
      offset += channels[i];
    }
  }
  return parts.front().tape().record(
      std::move(out), parts,
      [batch, total, length, channels](const Tensor& og, std::span<Tensor* const> grads) {
        for (std::size_t b = 0; b < batch; ++b) {
          std::size_t offset = 0;
          for (std::size_t i = 0; i < channels.size(); ++i) {
            if (grads[i]) {
              const double* src = og.raw() + (b * total + offset) * length;
              double* dst = grads[i]->raw() + b * channels[i] * length;
              for (std::size_t j = 0; j < channels[i] * length; ++j) dst[j] += src[j];
            }
            offset += channels[i];
          }
        }
      });
}

Tensor one_hot(std::span<const int> labels, std::size_t n_classes) {
  if (labels.empty()) throw DataError("one_hot: no labels");
  Tensor out(Shape{labels.size(), n_classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= n_classes) {
      throw DataError("label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                      " is out of range for " + std::to_string(n_classes) + " classes");
    }
    out.at(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return out;
}

Var cross_entropy(Var probs, const Tensor& target) {
  const Tensor& p = probs.value();
  if (p.rank() != 2) throw ShapeError("cross_entropy", "probs", "expected [B, K], got " + shape_string(p.shape()));
  if (target.shape() != p.shape()) {
    throw ShapeError("cross_entropy", "labels", shape_string(target.shape()) + " vs " + shape_string(p.shape()));
  }
  const double inv_batch = 1.0 / static_cast<double>(p.dim(0));
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (target[i] != 0.0) loss -= target[i] * std::log(std::max(p[i], kProbabilityFloor));
  }
  const Tensor* pv = &p;
  return probs.tape().record(Tensor::scalar(loss * inv_batch), {probs},
                             [pv, target, inv_batch](const Tensor& og, std::span<Tensor* const> grads) {
                               const double g = og[0] * inv_batch;
                               for (std::size_t i = 0; i < pv->size(); ++i) {
                                 if (target[i] != 0.0 && (*pv)[i] > kProbabilityFloor) {
                                   (*grads[0])[i] -= g * target[i] / (*pv)[i];
                                 }
                               }
                             });
}

Var cross_entropy(Var probs, std::span<const int> labels) {
  const Tensor& p = probs.value();
  if (p.rank() != 2) throw ShapeError("cross_entropy", "probs", "expected [B, K], got " + shape_string(p.shape()));
  if (labels.size() != p.dim(0)) {
    throw ShapeError("cross_entropy", "batch", std::to_string(labels.size()) + " labels for " +
                                                   std::to_string(p.dim(0)) + " rows");
  }
  return cross_entropy(probs, one_hot(labels, p.dim(1)));
}

Var mse_loss(Var pred, const Tensor& target) {
  const Tensor& p = pred.value();
  if (target.shape() != p.shape()) {
    throw ShapeError("mse_loss", "target", shape_string(target.shape()) + " vs " + shape_string(p.shape()));
  }
  const double inv = 1.0 / static_cast<double>(p.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double r = p[i] - target[i];
    loss += r * r;
  }
  const Tensor* pv = &p;
  return pred.tape().record(Tensor::scalar(loss * inv), {pred},
                            [pv, target, inv](const Tensor& og, std::span<Tensor* const> grads) {
                              for (std::size_t i = 0; i < pv->size(); ++i) {
                                (*grads[0])[i] += og[0] * 2.0 * inv * ((*pv)[i] - target[i]);
                              }
                            });
}

}  // namespace tsc::ad
