#pragma once

#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "tminer/common.hpp"
#include "tminer/rng.hpp"
#include "tminer/tensor.hpp"

namespace tminer::nc {

enum class Init { Zero, Glorot };

// Named tensors with stable (insertion) ordering. Initialization is a pure
// function of (set seed, tensor name, shape), so construction order does not
// change the weights.
template <class Real>
class ParameterSet {
 public:
  ParameterSet() = default;
  explicit ParameterSet(uint64_t seed) : seed_(seed) {}

  Tensor<Real>& add(const std::string& name, int rows, int cols, Init init) {
    if (index_.count(name)) throw Error("duplicate parameter name: " + name);
    for (char ch : name)
      if (ch == ' ' || ch == '\t' || ch == '\n') throw Error("parameter name has whitespace: " + name);
    Tensor<Real> t(Shape{rows, cols});
    if (init == Init::Glorot) {
      Rng rng(mix_seed(seed_, fnv1a64(name)));
      double a = std::sqrt(6.0 / (double(rows) + double(cols)));
      for (auto& v : t.data) v = static_cast<Real>(rng.uniform(-a, a));
    }
    index_.emplace(name, names_.size());
    names_.push_back(name);
    tensors_.push_back(std::move(t));
    return tensors_.back();
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  Tensor<Real>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter: " + name);
    return tensors_[it->second];
  }
  const Tensor<Real>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter: " + name);
    return tensors_[it->second];
  }

  const std::vector<std::string>& names() const { return names_; }
  uint64_t seed() const { return seed_; }

  size_t total_values() const {
    size_t n = 0;
    for (const auto& t : tensors_) n += t.data.size();
    return n;
  }

  template <class R2>
  ParameterSet<R2> cast() const {
    ParameterSet<R2> out(seed_);
    for (size_t i = 0; i < names_.size(); ++i) {
      auto& t = out.add(names_[i], tensors_[i].rows(), tensors_[i].cols(), Init::Zero);
      for (size_t k = 0; k < t.data.size(); ++k)
        t.data[k] = static_cast<R2>(tensors_[i].data[k]);
    }
    return out;
  }

  // Text manifest followed by one raw little-endian blob per tensor in
  // manifest order. Round-trips bit-identical.
  void save(std::ostream& os) const {
    os << "tminer-params " << kVersionTag << "\n";
    os << "dtype " << dtype_name<Real>() << "\n";
    os << "seed " << seed_ << "\n";
    os << "count " << names_.size() << "\n";
    for (size_t i = 0; i < names_.size(); ++i)
      os << "tensor " << names_[i] << " " << tensors_[i].rows() << " "
         << tensors_[i].cols() << "\n";
    os << "blob\n";
    for (const auto& t : tensors_)
      os.write(reinterpret_cast<const char*>(t.data.data()),
               static_cast<std::streamsize>(t.data.size() * sizeof(Real)));
    if (!os) throw IoError("parameter write failed");
  }

  static ParameterSet load(std::istream& is) {
    auto next = [&is](const char* what) {
      std::string line;
      if (!std::getline(is, line)) throw IoError(std::string("parameter file truncated at ") + what);
      return line;
    };
    {
      auto head = split_ws(next("header"));
      if (head.size() != 2 || head[0] != "tminer-params" || head[1] != kVersionTag)
        throw IoError("bad parameter file header");
    }
    auto dt = split_ws(next("dtype"));
    if (dt.size() != 2 || dt[0] != "dtype") throw IoError("bad dtype line");
    if (dt[1] != dtype_name<Real>())
      throw IoError("parameter dtype " + dt[1] + " does not match requested " +
                    dtype_name<Real>());
    auto sd = split_ws(next("seed"));
    if (sd.size() != 2 || sd[0] != "seed") throw IoError("bad seed line");
    ParameterSet ps(std::stoull(sd[1]));
    auto ct = split_ws(next("count"));
    if (ct.size() != 2 || ct[0] != "count") throw IoError("bad count line");
    size_t count = std::stoull(ct[1]);
    std::vector<std::string> names;
    std::vector<Shape> shapes;
    for (size_t i = 0; i < count; ++i) {
      auto tk = split_ws(next("tensor"));
      if (tk.size() != 4 || tk[0] != "tensor") throw IoError("bad tensor line");
      names.push_back(tk[1]);
      shapes.push_back(Shape{std::stoi(tk[2]), std::stoi(tk[3])});
    }
    if (trim(next("blob")) != "blob") throw IoError("missing blob marker");
    for (size_t i = 0; i < count; ++i) {
      auto& t = ps.add(names[i], shapes[i].rows, shapes[i].cols, Init::Zero);
      is.read(reinterpret_cast<char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(Real)));
      if (is.gcount() != static_cast<std::streamsize>(t.data.size() * sizeof(Real)))
        throw IoError("parameter blob truncated at tensor " + names[i]);
    }
    return ps;
  }

  void save_file(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    save(os);
  }
  static ParameterSet load_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for read: " + path);
    return load(is);
  }

 private:
  uint64_t seed_ = 0;
  std::vector<std::string> names_;
  std::vector<Tensor<Real>> tensors_;
  std::map<std::string, size_t> index_;
};

// Gradient accumulator keyed by parameter name. A parameter the graph never
// touched stays at zeros, so optimizers see a full gradient vector.
template <class Real>
struct GradientMap {
  std::map<std::string, Tensor<Real>> g;

  void ensure_all(const ParameterSet<Real>& ps) {
    for (const auto& name : ps.names())
      g.emplace(name, Tensor<Real>(ps.get(name).shape));
  }

  void accumulate(const std::string& name, const Tensor<Real>& grad) {
    auto it = g.find(name);
    if (it == g.end()) {
      g.emplace(name, grad);
    } else {
      if (!(it->second.shape == grad.shape)) throw ShapeError("gradient shape mismatch: " + name);
      it->second.mat() += grad.mat();
    }
  }

  template <class G>
  void collect(const G& graph) {
    graph.for_each_param_grad(
        [this](const std::string& name, const Tensor<Real>& grad) { accumulate(name, grad); });
  }

  void scale(Real k) {
    for (auto& [name, t] : g) t.mat() *= k;
  }

  const Tensor<Real>* find(const std::string& name) const {
    auto it = g.find(name);
    return it == g.end() ? nullptr : &it->second;
  }
};

}  // namespace tminer::nc
