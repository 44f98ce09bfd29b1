#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "admmsdp/problem.hpp"

namespace admmsdp {

namespace detail {

inline std::string strip_punct(std::string s) {
  for (char& c : s) {
    if (c == '{' || c == '}' || c == '(' || c == ')' || c == ',') c = ' ';
  }
  return s;
}

inline bool parse_double(const std::string& tok, double& out) {
  try {
    std::size_t pos = 0;
    out = std::stod(tok, &pos);
    return pos == tok.size();
  } catch (const std::exception&) {
    return false;
  }
}

inline bool parse_long(const std::string& tok, long& out) {
  try {
    std::size_t pos = 0;
    out = std::stol(tok, &pos);
    return pos == tok.size();
  } catch (const std::exception&) {
    return false;
  }
}

inline std::vector<std::string> tokens(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> out;
  std::string t;
  while (is >> t) out.push_back(t);
  return out;
}

}  // namespace detail

/// Reads a sparse SDPA file with a single semidefinite block.
///
/// The file describes  max <F0,Y>  s.t.  <F_i,Y> = c_i,  Y PSD; it is
/// returned in standard form with C = -F0, A_i = F_i, b = c, so optimal
/// values differ in sign from the SDPA objective.
inline SdpProblem read_sdpa(std::istream& in, const std::string& name = "<stream>") {
  auto fail = [&](long line, const std::string& msg) -> FormatError {
    std::ostringstream os;
    os << name << ":" << line << ": " << msg;
    return FormatError(os.str());
  };

  std::string line;
  long lineno = 0;
  std::vector<std::pair<long, std::string>> body;
  bool in_header_comments = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (in_header_comments) {
      const auto first = line.find_first_not_of(" \t");
      if (first == std::string::npos) continue;
      if (line[first] == '"' || line[first] == '*') continue;
      in_header_comments = false;
    }
    body.emplace_back(lineno, line);
  }

  std::size_t cur = 0;
  auto next_nonblank = [&]() -> const std::pair<long, std::string>* {
    while (cur < body.size() && detail::tokens(body[cur].second).empty()) ++cur;
    return cur < body.size() ? &body[cur++] : nullptr;
  };

  const auto* mline = next_nonblank();
  if (!mline) throw fail(lineno, "missing constraint count");
  long m = 0;
  {
    auto t = detail::tokens(detail::strip_punct(mline->second));
    if (t.empty() || !detail::parse_long(t[0], m) || m < 0) {
      throw fail(mline->first, "expected a nonnegative constraint count");
    }
  }
  const auto* bline = next_nonblank();
  long nblocks = 0;
  if (!bline) throw fail(lineno, "missing block count");
  {
    auto t = detail::tokens(detail::strip_punct(bline->second));
    if (t.empty() || !detail::parse_long(t[0], nblocks) || nblocks < 1) {
      throw fail(bline->first, "expected a positive block count");
    }
  }

  std::vector<long> sizes;
  long size_line = 0;
  while (static_cast<long>(sizes.size()) < nblocks) {
    const auto* sl = next_nonblank();
    if (!sl) throw fail(lineno, "missing block sizes");
    size_line = sl->first;
    for (const auto& tok : detail::tokens(detail::strip_punct(sl->second))) {
      long v = 0;
      if (!detail::parse_long(tok, v)) break;  // trailing annotation
      sizes.push_back(v);
      if (static_cast<long>(sizes.size()) == nblocks) break;
    }
  }
  for (long k = 0; k < nblocks; ++k) {
    if (sizes[k] < 0) {
      std::ostringstream os;
      os << name << ":" << size_line << ": block " << k + 1 << " has size "
         << sizes[k] << " (diagonal/LP block); only one semidefinite block is supported";
      throw UnsupportedFormat(os.str());
    }
    if (sizes[k] == 0) throw fail(size_line, "block size 0");
  }
  if (nblocks > 1) {
    std::ostringstream os;
    os << name << ":" << size_line << ": " << nblocks
       << " blocks declared; block 2 (size " << sizes[1]
       << ") is unsupported, only a single semidefinite block is handled";
    throw UnsupportedFormat(os.str());
  }
  const long n = sizes[0];

  Vector b(m);
  long got = 0;
  while (got < m) {
    const auto* cl = next_nonblank();
    if (!cl) throw fail(lineno, "missing objective vector entries");
    for (const auto& tok : detail::tokens(detail::strip_punct(cl->second))) {
      double v = 0;
      if (!detail::parse_double(tok, v)) throw fail(cl->first, "bad number '" + tok + "'");
      b(got++) = v;
      if (got == m) break;
    }
  }

  std::vector<Matrix> F(static_cast<std::size_t>(m + 1), Matrix::Zero(n, n));
  std::map<std::tuple<long, long, long>, long> seen;
  while (const auto* el = next_nonblank()) {
    auto t = detail::tokens(detail::strip_punct(el->second));
    if (t.size() < 5) throw fail(el->first, "entry line needs 'matno blkno i j value'");
    long mat = 0, blk = 0, i = 0, j = 0;
    double v = 0;
    if (!detail::parse_long(t[0], mat) || !detail::parse_long(t[1], blk) ||
        !detail::parse_long(t[2], i) || !detail::parse_long(t[3], j) ||
        !detail::parse_double(t[4], v)) {
      throw fail(el->first, "malformed entry line");
    }
    if (mat < 0 || mat > m) throw fail(el->first, "matrix number out of range");
    if (blk != 1) throw fail(el->first, "block number out of range");
    if (i < 1 || i > n || j < 1 || j > n) throw fail(el->first, "index out of range");
    if (i > j) std::swap(i, j);
    auto key = std::make_tuple(mat, i, j);
    if (auto it = seen.find(key); it != seen.end()) {
      std::ostringstream os;
      os << "duplicate entry for matrix " << mat << " (" << i << "," << j
         << "), first given on line " << it->second;
      throw fail(el->first, os.str());
    }
    seen.emplace(key, el->first);
    F[mat](i - 1, j - 1) = v;
    F[mat](j - 1, i - 1) = v;
  }

  std::vector<SymMat> A;
  for (long k = 1; k <= m; ++k) A.emplace_back(F[k]);
  return make_problem(SymMat(-F[0]), std::move(A), std::move(b));
}

inline SdpProblem load_sdpa(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  return read_sdpa(in, path);
}

/// Writes the problem in sparse SDPA form; values use 17 significant digits
/// so a read-back reproduces the coefficients exactly.
inline void write_sdpa(std::ostream& out, const SdpProblem& p,
                       const std::string& comment = "") {
  auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  if (!comment.empty()) out << "\"" << comment << "\n";
  out << p.m << "\n1\n" << p.n << "\n";
  for (Index i = 0; i < p.m; ++i) out << (i ? " " : "") << num(p.b(i));
  out << "\n";
  auto emit = [&](Index mat, const Matrix& a, double sign) {
    for (Index i = 0; i < p.n; ++i)
      for (Index j = i; j < p.n; ++j)
        if (a(i, j) != 0.0)
          out << mat << " 1 " << i + 1 << " " << j + 1 << " " << num(sign * a(i, j))
              << "\n";
  };
  emit(0, p.C.mat(), -1.0);
  for (Index k = 0; k < p.m; ++k) emit(k + 1, p.A[k].mat(), 1.0);
}

inline void save_sdpa(const std::string& path, const SdpProblem& p,
                      const std::string& comment = "") {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  write_sdpa(out, p, comment);
  if (!out) throw FormatError("write failed for " + path);
}

}  // namespace admmsdp
