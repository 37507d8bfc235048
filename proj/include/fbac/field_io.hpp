#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "fbac/field.hpp"

namespace fbac {

/// FBAC1 text dump. 17 significant digits per value; round-trips bit-exactly.
inline void dump_field(const ScalarField& f, std::ostream& os) {
  const Grid& g = f.grid();
  os << "FBAC1\n";
  os << "dim " << g.dim << "\n";
  os << "shape";
  for (int a = 0; a < g.dim; ++a) os << " " << g.shape[size_t(a)];
  os << "\n";
  os << "origin";
  for (int a = 0; a < g.dim; ++a) os << " " << fmt17(g.origin[a]);
  os << "\n";
  os << "spacing " << fmt17(g.h) << "\n";
  os << "eps " << (f.eps() ? fmt17(*f.eps()) : std::string("none")) << "\n";
  os << "label " << f.label() << "\n";
  os << "data\n";
  for (double v : f.values()) os << fmt17(v) << "\n";
}

inline void dump_field_file(const ScalarField& f, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open for writing: " + path);
  dump_field(f, os);
}

inline ScalarField load_field(std::istream& is, const std::string& name = "<stream>") {
  int lineno = 0;
  auto next = [&](const char* what) {
    std::string line;
    if (!std::getline(is, line))
      throw ParseError(name + ":" + std::to_string(lineno + 1) + ": expected " + what);
    ++lineno;
    return line;
  };
  auto fail = [&](const std::string& msg) -> void {
    throw ParseError(name + ":" + std::to_string(lineno) + ": " + msg);
  };

  if (next("magic") != "FBAC1") fail("bad magic (want FBAC1)");

  std::istringstream ls(next("dim"));
  std::string key;
  int dim = 0;
  if (!(ls >> key >> dim) || key != "dim" || (dim != 2 && dim != 3)) fail("bad dim line");

  Grid g;
  g.dim = dim;
  {
    std::istringstream s(next("shape"));
    if (!(s >> key) || key != "shape") fail("bad shape line");
    for (int a = 0; a < dim; ++a)
      if (!(s >> g.shape[size_t(a)]) || g.shape[size_t(a)] < 4) fail("bad shape entry");
  }
  {
    std::istringstream s(next("origin"));
    if (!(s >> key) || key != "origin") fail("bad origin line");
    g.origin = Vec(dim);
    for (int a = 0; a < dim; ++a)
      if (!(s >> g.origin[a])) fail("bad origin entry");
  }
  {
    std::istringstream s(next("spacing"));
    if (!(s >> key >> g.h) || key != "spacing" || g.h <= 0) fail("bad spacing line");
  }
  std::optional<double> eps;
  {
    std::istringstream s(next("eps"));
    std::string v;
    if (!(s >> key >> v) || key != "eps") fail("bad eps line");
    if (v != "none") {
      try {
        eps = std::stod(v);
      } catch (...) {
        fail("bad eps value");
      }
    }
  }
  std::string label;
  {
    std::string line = next("label");
    if (line.rfind("label", 0) != 0) fail("bad label line");
    label = line.size() > 6 ? line.substr(6) : std::string();
  }
  if (next("data") != "data") fail("expected data marker");

  std::vector<double> values;
  values.reserve(g.num_nodes());
  for (size_t i = 0; i < g.num_nodes(); ++i) {
    std::string line = next("value");
    try {
      size_t pos = 0;
      double v = std::stod(line, &pos);
      values.push_back(v);
    } catch (...) {
      fail("bad value");
    }
  }
  return ScalarField(g, std::move(values), std::move(label), eps);
}

inline ScalarField load_field_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open: " + path);
  return load_field(is, path);
}

} // namespace fbac
