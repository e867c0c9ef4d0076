#pragma once

// Plain-text containers for models and datasets. Numbers are written with
// %.17g so a write/read cycle is exact, and writing the same value twice
// gives the same bytes.

#include "ttsysid/core.hpp"
#include "ttsysid/dictionary.hpp"
#include "ttsysid/models.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>

namespace ttsysid {

inline constexpr const char* kModelMagic = "ttsysid-model v1";
inline constexpr const char* kDatasetMagic = "ttsysid-dataset v1";

namespace detail {

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_core(std::ostream& os, const Core& c) {
  os << c.left_rank() << ' ' << c.phys() << ' ' << c.right_rank() << '\n';
  const RowMatrix& u = c.left_unfolding();
  for (Index row = 0; row < u.rows(); ++row) {
    for (Index col = 0; col < u.cols(); ++col) os << (col ? " " : "") << fmt_double(u(row, col));
    os << '\n';
  }
}

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  std::string word() {
    std::string w;
    if (!(is_ >> w)) fail("unexpected end of input");
    return w;
  }

  void expect(const std::string& w) {
    const std::string got = word();
    if (got != w) fail("expected '" + w + "', got '" + got + "'");
  }

  Index index() {
    const std::string w = word();
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(w, &used);
    } catch (const std::exception&) {
      fail("expected an integer, got '" + w + "'");
    }
    if (used != w.size()) fail("expected an integer, got '" + w + "'");
    return static_cast<Index>(v);
  }

  double number() {
    const std::string w = word();
    char* end = nullptr;
    const double v = std::strtod(w.c_str(), &end);
    if (end != w.c_str() + w.size()) fail("expected a number, got '" + w + "'");
    return v;
  }

  std::string line() {
    std::string l;
    std::getline(is_ >> std::ws, l);
    return l;
  }

  Core core() {
    const Index a = index(), p = index(), b = index();
    if (a < 1 || p < 1 || b < 1) fail("core dimensions must be positive");
    Core c(a, p, b);
    for (Index n = 0; n < c.size(); ++n) c.as_vector()(n) = number();
    return c;
  }

  [[noreturn]] void fail(const std::string& what) const { throw Error("model file: " + what); }

 private:
  std::istream& is_;
};

}  // namespace detail

using AnyModel = std::variant<SelectionModel, SystemTT>;

struct StoredModel {
  AnyModel model;
  BasisKind basis = BasisKind::legendre;
};

inline void write_model(std::ostream& os, const SelectionModel& m, BasisKind basis) {
  os << kModelMagic << '\n'
     << "format selection\n"
     << "basis " << to_string(basis) << ' ' << m.phys() << '\n'
     << "order " << m.order() << '\n'
     << "types " << m.types() << '\n';
  for (Index k = 0; k < m.order(); ++k) {
    os << "map";
    for (Index l = 0; l < m.order(); ++l) os << ' ' << m.maps().type(k, l);
    os << '\n';
  }
  for (Index k = 0; k < m.order(); ++k)
    for (Index q = 0; q < m.types(); ++q) {
      os << "core " << k << ' ' << q << ' ';
      detail::write_core(os, m.core(k, q));
    }
}

inline void write_model(std::ostream& os, const SystemTT& m, BasisKind basis) {
  os << kModelMagic << '\n'
     << "format single-tt\n"
     << "basis " << to_string(basis) << ' ' << m.phys() << '\n'
     << "order " << m.order() << '\n';
  for (Index k = 0; k < m.order(); ++k) {
    os << "core " << k << ' ';
    detail::write_core(os, m.tt().core(k));
  }
}

inline StoredModel read_model(std::istream& is) {
  detail::Reader r(is);
  if (r.line() != kModelMagic) r.fail("missing header line '" + std::string(kModelMagic) + "'");
  r.expect("format");
  const std::string format = r.word();
  r.expect("basis");
  StoredModel out;
  try {
    out.basis = parse_basis_kind(r.word());
  } catch (const std::exception& e) {
    r.fail(e.what());
  }
  const Index p = r.index();
  r.expect("order");
  const Index d = r.index();
  if (d < 1 || p < 1) r.fail("order and basis size must be positive");
  auto check_core = [&](const Core& c) {
    if (c.phys() != p) r.fail("core physical dimension does not match the basis size");
  };
  try {
    if (format == "selection") {
      r.expect("types");
      SelectionMaps maps;
      maps.types = r.index();
      maps.activation.assign(static_cast<std::size_t>(d), std::vector<int>(static_cast<std::size_t>(d)));
      for (Index k = 0; k < d; ++k) {
        r.expect("map");
        for (Index l = 0; l < d; ++l) maps.activation[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)] =
            static_cast<int>(r.index());
      }
      std::vector<std::vector<Core>> cores(static_cast<std::size_t>(d));
      for (Index k = 0; k < d; ++k)
        for (Index q = 0; q < maps.types; ++q) {
          r.expect("core");
          if (r.index() != k || r.index() != q) r.fail("cores out of order");
          cores[static_cast<std::size_t>(k)].push_back(r.core());
          check_core(cores[static_cast<std::size_t>(k)].back());
        }
      out.model = SelectionModel(std::move(cores), std::move(maps));
    } else if (format == "single-tt") {
      std::vector<Core> cores;
      for (Index k = 0; k < d; ++k) {
        r.expect("core");
        if (r.index() != k) r.fail("cores out of order");
        cores.push_back(r.core());
        check_core(cores.back());
      }
      out.model = SystemTT(TensorTrain(std::move(cores)));
    } else {
      r.fail("unknown format '" + format + "'");
    }
  } catch (const ShapeError& e) {
    r.fail(e.what());
  }
  return out;
}

template <class Model>
void save_model(const std::string& path, const Model& m, BasisKind basis) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write_model(os, m, basis);
}

inline StoredModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path + "'");
  return read_model(is);
}

// Dataset files: a magic line, one header line "m d seed sigma", then m rows
// holding the d state entries followed by the d derivative entries.
inline void write_dataset(std::ostream& os, const Dataset& data) {
  os << kDatasetMagic << '\n'
     << data.samples() << ' ' << data.order() << ' ' << data.seed << ' ' << detail::fmt_double(data.noise) << '\n';
  for (Index j = 0; j < data.samples(); ++j) {
    for (Index k = 0; k < data.order(); ++k) os << (k ? " " : "") << detail::fmt_double(data.X(j, k));
    for (Index k = 0; k < data.order(); ++k) os << ' ' << detail::fmt_double(data.Y(j, k));
    os << '\n';
  }
}

inline Dataset read_dataset(std::istream& is) {
  detail::Reader r(is);
  if (r.line() != kDatasetMagic) r.fail("missing header line '" + std::string(kDatasetMagic) + "'");
  Dataset data;
  const Index m = r.index(), d = r.index();
  if (m < 1 || d < 1) r.fail("dataset dimensions must be positive");
  data.seed = std::stoull(r.word());
  data.noise = r.number();
  data.X.resize(m, d);
  data.Y.resize(m, d);
  for (Index j = 0; j < m; ++j) {
    for (Index k = 0; k < d; ++k) data.X(j, k) = r.number();
    for (Index k = 0; k < d; ++k) data.Y(j, k) = r.number();
  }
  return data;
}

inline void save_dataset(const std::string& path, const Dataset& data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write_dataset(os, data);
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path + "'");
  return read_dataset(is);
}

}  // namespace ttsysid
