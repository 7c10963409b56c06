#include "medmat/nn/ops.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>
#include <fmt/format.h>

#include "medmat/core/error.hpp"

namespace medmat::nn {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using ConstMapRM = Eigen::Map<const MatRM>;

bool any_requires_grad(std::initializer_list<Var> vars) {
  return std::any_of(vars.begin(), vars.end(), [](const Var& v) { return v.requires_grad(); });
}

// Row (ci*k + ky)*k + kx, column y*W + x.
Tensor im2col(const Tensor& in, int k, int pad) {
  const int c = in.channels(), h = in.height(), w = in.width();
  Tensor cols({c * k * k, h, w});
  double* out = cols.data();
  for (int ci = 0; ci < c; ++ci) {
    const double* src = in.data() + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const int dx = kx - pad;
        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
        for (int y = 0; y < h; ++y, out += w) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;  // already zero
          const double* row = src + static_cast<std::size_t>(sy) * w + dx;
          for (int x = x0; x < x1; ++x) out[x] = row[x];
        }
      }
    }
  }
  return cols;
}

void col2im_add(const double* cols, int c, int h, int w, int k, int pad, Tensor& dst) {
  for (int ci = 0; ci < c; ++ci) {
    double* out = dst.data() + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const int dx = kx - pad;
        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
        for (int y = 0; y < h; ++y, cols += w) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          double* row = out + static_cast<std::size_t>(sy) * w + dx;
          for (int x = x0; x < x1; ++x) row[x] += cols[x];
        }
      }
    }
  }
}

Tensor map_values(const Tensor& in, double (*f)(double)) {
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return out;
}

}  // namespace

Var conv2d(Var x, Var weight, Var bias, int kernel) {
  const Shape xs = x.shape(), ws = weight.shape();
  const int cin = xs.channels, cout = ws.channels;
  if (ws.height != cin || ws.width != kernel * kernel) {
    throw ShapeError(fmt::format("conv2d: weight {} does not fit input {} with kernel {}", ws.str(),
                                 xs.str(), kernel));
  }
  if (bias.shape() != Shape{cout, 1, 1}) throw ShapeError("conv2d: bias shape mismatch");
  const int pad = kernel / 2;
  const int hw = xs.height * xs.width;
  const int depth = cin * kernel * kernel;

  Tensor cols;
  if (kernel != 1) cols = im2col(x.value(), kernel, pad);
  const double* col_data = kernel == 1 ? x.value().data() : cols.data();

  Tensor out({cout, xs.height, xs.width});
  MapRM o(out.data(), cout, hw);
  o.noalias() = ConstMapRM(weight.value().data(), cout, depth) * ConstMapRM(col_data, depth, hw);
  for (int co = 0; co < cout; ++co) o.row(co).array() += bias.value()[co];

  if (!any_requires_grad({x, weight, bias})) return x.tape().record(std::move(out), {x, weight, bias}, nullptr);

  return x.tape().record(
      std::move(out), {x, weight, bias},
      [=, cols = std::move(cols)](Tape& t, const Tensor& g) {
        ConstMapRM gm(g.data(), cout, hw);
        const double* cd = kernel == 1 ? x.value().data() : cols.data();
        ConstMapRM cm(cd, depth, hw);
        if (Tensor* gw = t.grad_sink(weight)) MapRM(gw->data(), cout, depth).noalias() += gm * cm.transpose();
        if (Tensor* gb = t.grad_sink(bias)) {
          for (int co = 0; co < cout; ++co) (*gb)[co] += gm.row(co).sum();
        }
        if (Tensor* gx = t.grad_sink(x)) {
          ConstMapRM wm(weight.value().data(), cout, depth);
          if (kernel == 1) {
            MapRM(gx->data(), cin, hw).noalias() += wm.transpose() * gm;
          } else {
            MatRM dcols = wm.transpose() * gm;
            col2im_add(dcols.data(), cin, xs.height, xs.width, kernel, pad, *gx);
          }
        }
      });
}

Var avg_pool2(Var x) {
  const Shape s = x.shape();
  if (s.height % 2 != 0 || s.width % 2 != 0) {
    throw ShapeError(fmt::format("avg_pool2 needs even extents, got {}", s.str()));
  }
  const Shape os{s.channels, s.height / 2, s.width / 2};
  Tensor out(os);
  const Tensor& in = x.value();
  for (int c = 0; c < os.channels; ++c) {
    for (int y = 0; y < os.height; ++y) {
      for (int xx = 0; xx < os.width; ++xx) {
        out(c, y, xx) = 0.25 * (in(c, 2 * y, 2 * xx) + in(c, 2 * y, 2 * xx + 1) + in(c, 2 * y + 1, 2 * xx) +
                                in(c, 2 * y + 1, 2 * xx + 1));
      }
    }
  }
  return x.tape().record(std::move(out), {x}, [=](Tape& t, const Tensor& g) {
    Tensor* gx = t.grad_sink(x);
    for (int c = 0; c < os.channels; ++c) {
      for (int y = 0; y < os.height; ++y) {
        for (int xx = 0; xx < os.width; ++xx) {
          const double v = 0.25 * g(c, y, xx);
          (*gx)(c, 2 * y, 2 * xx) += v;
          (*gx)(c, 2 * y, 2 * xx + 1) += v;
          (*gx)(c, 2 * y + 1, 2 * xx) += v;
          (*gx)(c, 2 * y + 1, 2 * xx + 1) += v;
        }
      }
    }
  });
}

Var upsample2(Var x) {
  const Shape s = x.shape();
  const Shape os{s.channels, s.height * 2, s.width * 2};
  Tensor out(os);
  const Tensor& in = x.value();
  for (int c = 0; c < os.channels; ++c) {
    for (int y = 0; y < os.height; ++y) {
      for (int xx = 0; xx < os.width; ++xx) out(c, y, xx) = in(c, y / 2, xx / 2);
    }
  }
  return x.tape().record(std::move(out), {x}, [=](Tape& t, const Tensor& g) {
    Tensor* gx = t.grad_sink(x);
    for (int c = 0; c < os.channels; ++c) {
      for (int y = 0; y < os.height; ++y) {
        for (int xx = 0; xx < os.width; ++xx) (*gx)(c, y / 2, xx / 2) += g(c, y, xx);
      }
    }
  });
}

Var relu(Var x) {
  Tensor out = map_values(x.value(), [](double v) { return v > 0.0 ? v : 0.0; });
  return x.tape().record(std::move(out), {x}, [=](Tape& t, const Tensor& g) {
    Tensor* gx = t.grad_sink(x);
    const Tensor& in = x.value();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in[i] > 0.0) (*gx)[i] += g[i];
    }
  });
}

Var sigmoid(Var x) {
  Tensor out = map_values(x.value(), [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  if (!x.requires_grad()) return x.tape().record(std::move(out), {x}, nullptr);
  Tensor saved = out;
  return x.tape().record(std::move(out), {x}, [x, saved = std::move(saved)](Tape& t, const Tensor& g) {
    Tensor* gx = t.grad_sink(x);
    for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * saved[i] * (1.0 - saved[i]);
  });
}

Var exp(Var x) {
  Tensor out = map_values(x.value(), [](double v) { return std::exp(v); });
  return x.tape().record(std::move(out), {x}, [=](Tape& t, const Tensor& g) {
    Tensor* gx = t.grad_sink(x);
    for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * std::exp(x.value()[i]);
  });
}

Var add(Var a, Var b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor out = a.value();
  out += b.value();
  return a.tape().record(std::move(out), {a, b}, [=](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_sink(a)) *ga += g;
    if (Tensor* gb = t.grad_sink(b)) *gb += g;
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [=](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_sink(a)) *ga += g;
    if (Tensor* gb = t.grad_sink(b)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [=](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_sink(a)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * b.value()[i];
    }
    if (Tensor* gb = t.grad_sink(b)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * a.value()[i];
    }
  });
}

Var scale(Var x, double factor) {
  Tensor out = x.value();
  out *= factor;
  return x.tape().record(std::move(out), {x}, [=](Tape& t, const Tensor& g) {
    Tensor* gx = t.grad_sink(x);
    for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += factor * g[i];
  });
}

Var add_constant(Var x, double c) {
  Tensor out = x.value();
  for (double& v : out.values()) v += c;
  return x.tape().record(std::move(out), {x}, [=](Tape& t, const Tensor& g) { *t.grad_sink(x) += g; });
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ArityError("concat of zero tensors");
  const int h = parts.front().shape().height, w = parts.front().shape().width;
  int channels = 0;
  for (const Var& p : parts) {
    if (p.shape().height != h || p.shape().width != w) {
      throw ShapeError(fmt::format("concat: spatial mismatch {} vs {}x{}", p.shape().str(), h, w));
    }
    channels += p.shape().channels;
  }
  Tensor out({channels, h, w});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::copy(p.value().values().begin(), p.value().values().end(), out.data() + offset);
    offset += p.value().size();
  }
  return parts.front().tape().record(std::move(out), parts, [parts](Tape& t, const Tensor& g) {
    std::size_t off = 0;
    for (const Var& p : parts) {
      const std::size_t n = p.value().size();
      if (Tensor* gp = t.grad_sink(p)) {
        for (std::size_t i = 0; i < n; ++i) (*gp)[i] += g[off + i];
      }
      off += n;
    }
  });
}

Var slice_channels(Var x, int begin, int count) {
  const Shape s = x.shape();
  if (begin < 0 || count < 0 || begin + count > s.channels) {
    throw ShapeError(fmt::format("slice [{}, {}) outside {} channels", begin, begin + count, s.channels));
  }
  const std::size_t plane = s.plane();
  Tensor out({count, s.height, s.width});
  std::copy_n(x.value().data() + begin * plane, count * plane, out.data());
  return x.tape().record(std::move(out), {x}, [=](Tape& t, const Tensor& g) {
    Tensor* gx = t.grad_sink(x);
    for (std::size_t i = 0; i < g.size(); ++i) (*gx)[begin * plane + i] += g[i];
  });
}

Var broadcast_spatial(Var v, int height, int width) {
  const Shape s = v.shape();
  if (s.height != 1 || s.width != 1) throw ShapeError("broadcast_spatial expects an (n,1,1) vector");
  Tensor out({s.channels, height, width});
  for (int c = 0; c < s.channels; ++c) std::fill_n(out.channel(c).data(), out.channel(c).size(), v.value()[c]);
  return v.tape().record(std::move(out), {v}, [=](Tape& t, const Tensor& g) {
    Tensor* gv = t.grad_sink(v);
    for (int c = 0; c < s.channels; ++c) {
      double acc = 0.0;
      for (double x : g.channel(c)) acc += x;
      (*gv)[c] += acc;
    }
  });
}

Var scale_channels(Var x, Var gates) {
  const Shape s = x.shape();
  if (gates.shape() != Shape{s.channels, 1, 1}) throw ShapeError("scale_channels: gate count mismatch");
  Tensor out = x.value();
  for (int c = 0; c < s.channels; ++c) {
    for (double& v : out.channel(c)) v *= gates.value()[c];
  }
  return x.tape().record(std::move(out), {x, gates}, [=](Tape& t, const Tensor& g) {
    Tensor* gx = t.grad_sink(x);
    Tensor* gg = t.grad_sink(gates);
    for (int c = 0; c < s.channels; ++c) {
      const auto gc = g.channel(c);
      const auto xc = x.value().channel(c);
      const double gate = gates.value()[c];
      double acc = 0.0;
      for (std::size_t i = 0; i < gc.size(); ++i) {
        if (gx) gx->channel(c)[i] += gc[i] * gate;
        acc += gc[i] * xc[i];
      }
      if (gg) (*gg)[c] += acc;
    }
  });
}

Var global_avg_pool(Var x) {
  const Shape s = x.shape();
  Tensor out({s.channels, 1, 1});
  for (int c = 0; c < s.channels; ++c) {
    double acc = 0.0;
    for (double v : x.value().channel(c)) acc += v;
    out[c] = acc / static_cast<double>(s.plane());
  }
  return x.tape().record(std::move(out), {x}, [=](Tape& t, const Tensor& g) {
    Tensor* gx = t.grad_sink(x);
    for (int c = 0; c < s.channels; ++c) {
      const double v = g[c] / static_cast<double>(s.plane());
      for (double& d : gx->channel(c)) d += v;
    }
  });
}

Var global_max_pool(Var x) {
  const Shape s = x.shape();
  Tensor out({s.channels, 1, 1});
  std::vector<std::size_t> argmax(s.channels);
  for (int c = 0; c < s.channels; ++c) {
    const auto ch = x.value().channel(c);
    argmax[c] = static_cast<std::size_t>(std::max_element(ch.begin(), ch.end()) - ch.begin());
    out[c] = ch[argmax[c]];
  }
  return x.tape().record(std::move(out), {x}, [=](Tape& t, const Tensor& g) {
    Tensor* gx = t.grad_sink(x);
    for (int c = 0; c < s.channels; ++c) gx->channel(c)[argmax[c]] += g[c];
  });
}

Var linear(Var x, Var weight, Var bias) {
  const Shape xs = x.shape(), ws = weight.shape();
  if (xs.height != 1 || xs.width != 1 || ws.width != 1 || ws.height != xs.channels) {
    throw ShapeError(fmt::format("linear: weight {} does not fit input {}", ws.str(), xs.str()));
  }
  const int out_n = ws.channels, in_n = xs.channels;
  if (bias.shape() != Shape{out_n, 1, 1}) throw ShapeError("linear: bias shape mismatch");
  Tensor out({out_n, 1, 1});
  for (int o = 0; o < out_n; ++o) {
    double acc = bias.value()[o];
    for (int i = 0; i < in_n; ++i) acc += weight.value()(o, i, 0) * x.value()[i];
    out[o] = acc;
  }
  return x.tape().record(std::move(out), {x, weight, bias}, [=](Tape& t, const Tensor& g) {
    Tensor* gx = t.grad_sink(x);
    Tensor* gw = t.grad_sink(weight);
    Tensor* gb = t.grad_sink(bias);
    for (int o = 0; o < out_n; ++o) {
      if (gb) (*gb)[o] += g[o];
      for (int i = 0; i < in_n; ++i) {
        if (gw) (*gw)(o, i, 0) += g[o] * x.value()[i];
        if (gx) (*gx)[i] += g[o] * weight.value()(o, i, 0);
      }
    }
  });
}

Var softmax_channels(Var x) {
  const Shape s = x.shape();
  const std::size_t plane = s.plane();
  Tensor out(s);
  const Tensor& in = x.value();
  for (std::size_t p = 0; p < plane; ++p) {
    double m = in[p];
    for (int c = 1; c < s.channels; ++c) m = std::max(m, in[c * plane + p]);
    double z = 0.0;
    for (int c = 0; c < s.channels; ++c) z += (out[c * plane + p] = std::exp(in[c * plane + p] - m));
    for (int c = 0; c < s.channels; ++c) out[c * plane + p] /= z;
  }
  if (!x.requires_grad()) return x.tape().record(std::move(out), {x}, nullptr);
  Tensor sm = out;
  return x.tape().record(std::move(out), {x}, [=, sm = std::move(sm)](Tape& t, const Tensor& g) {
    Tensor* gx = t.grad_sink(x);
    for (std::size_t p = 0; p < plane; ++p) {
      double dot = 0.0;
      for (int c = 0; c < s.channels; ++c) dot += g[c * plane + p] * sm[c * plane + p];
      for (int c = 0; c < s.channels; ++c) {
        (*gx)[c * plane + p] += sm[c * plane + p] * (g[c * plane + p] - dot);
      }
    }
  });
}

Var instance_norm(Var x, double eps) {
  if (!(eps > 0.0)) throw DomainError("instance_norm eps must be > 0");
  const Shape s = x.shape();
  const std::size_t plane = s.plane();
  const Tensor& in = x.value();
  Tensor out(s);
  std::vector<double> inv_std(static_cast<std::size_t>(s.channels));
  for (int c = 0; c < s.channels; ++c) {
    const double* v = in.data() + c * plane;
    double mean = 0.0;
    for (std::size_t p = 0; p < plane; ++p) mean += v[p];
    mean /= static_cast<double>(plane);
    double var = 0.0;
    for (std::size_t p = 0; p < plane; ++p) var += (v[p] - mean) * (v[p] - mean);
    var /= static_cast<double>(plane);
    inv_std[c] = 1.0 / std::sqrt(var + eps);
    for (std::size_t p = 0; p < plane; ++p) out[c * plane + p] = (v[p] - mean) * inv_std[c];
  }
  if (!x.requires_grad()) return x.tape().record(std::move(out), {x}, nullptr);
  Tensor normed = out;
  return x.tape().record(std::move(out), {x}, [=, normed = std::move(normed)](Tape& t, const Tensor& g) {
    Tensor* gx = t.grad_sink(x);
    const double n = static_cast<double>(plane);
    for (int c = 0; c < s.channels; ++c) {
      const std::size_t o = c * plane;
      double g_mean = 0.0, gy_mean = 0.0;
      for (std::size_t p = 0; p < plane; ++p) {
        g_mean += g[o + p];
        gy_mean += g[o + p] * normed[o + p];
      }
      g_mean /= n;
      gy_mean /= n;
      for (std::size_t p = 0; p < plane; ++p) {
        (*gx)[o + p] += inv_std[c] * (g[o + p] - g_mean - normed[o + p] * gy_mean);
      }
    }
  });
}

Var sum(Var x) {
  double acc = 0.0;
  for (double v : x.value().values()) acc += v;
  return x.tape().record(Tensor({1, 1, 1}, acc), {x}, [=](Tape& t, const Tensor& g) {
    Tensor* gx = t.grad_sink(x);
    for (double& d : gx->values()) d += g[0];
  });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

}  // namespace medmat::nn
