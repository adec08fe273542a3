#include <cmath>
#include <fstream>
#include <iomanip>
#include <regex>
#include <sstream>

#include "ewfsqd/errors.hpp"
#include "ewfsqd/hamio.hpp"

namespace ewfsqd {

ClusterHamiltonian::ClusterHamiltonian(int norb_, int n_alpha_, int n_beta_)
    : norb(norb_),
      n_alpha(n_alpha_),
      n_beta(n_beta_),
      h(Eigen::MatrixXd::Zero(norb_, norb_)),
      eri(static_cast<std::size_t>(norb_) * norb_ * norb_ * norb_, 0.0) {}

void ClusterHamiltonian::set_eri(int p, int r, int q, int s, double v) {
  eri[eri_index(p, r, q, s)] = v;
  eri[eri_index(r, p, q, s)] = v;
  eri[eri_index(p, r, s, q)] = v;
  eri[eri_index(r, p, s, q)] = v;
  eri[eri_index(q, s, p, r)] = v;
  eri[eri_index(s, q, p, r)] = v;
  eri[eri_index(q, s, r, p)] = v;
  eri[eri_index(s, q, r, p)] = v;
}

void ClusterHamiltonian::check_invariants(double tol) const {
  if (norb < 0 || n_alpha < 0 || n_beta < 0 || n_alpha > norb ||
      n_beta > norb)
    throw ValidationError("electron count",
                          "n_alpha/n_beta must lie in [0, norb]");
  if (h.rows() != norb || h.cols() != norb ||
      eri.size() != static_cast<std::size_t>(norb) * norb * norb * norb)
    throw ValidationError("shape", "integral arrays do not match norb");
  if ((h - h.transpose()).cwiseAbs().maxCoeff() > tol)
    throw ValidationError("h symmetry", "one-body integrals not symmetric");
  for (int p = 0; p < norb; ++p)
    for (int r = 0; r < norb; ++r)
      for (int q = 0; q < norb; ++q)
        for (int s = 0; s < norb; ++s) {
          const double v = eri_at(p, r, q, s);
          if (std::abs(v - eri_at(r, p, q, s)) > tol ||
              std::abs(v - eri_at(p, r, s, q)) > tol ||
              std::abs(v - eri_at(q, s, p, r)) > tol)
            throw ValidationError("eri symmetry",
                                  "two-body integrals lack 8-fold symmetry");
        }
}

namespace {

struct FcidumpHeader {
  int norb = -1;
  int nelec = -1;
  int ms2 = 0;
};

// Pulls an integer-valued KEY=value out of the namelist text.
bool header_int(const std::string& text, const std::string& key, int& out) {
  const std::regex re("(^|[^A-Z_])" + key + R"(\s*=\s*(-?\d+))",
                      std::regex::icase);
  std::smatch m;
  if (!std::regex_search(text, m, re)) return false;
  out = std::stoi(m[2].str());
  return true;
}

}  // namespace

ClusterHamiltonian parse_fcidump(std::istream& in) {
  std::string line;
  std::string header;
  std::size_t lineno = 0;
  bool started = false;
  bool ended = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!started) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      if (line.find("&FCI") == std::string::npos &&
          line.find("&fci") == std::string::npos)
        throw ParseError("expected '&FCI' namelist header", lineno);
      started = true;
    }
    header += line;
    header += '\n';
    const auto stripped = line.substr(0, line.find('!'));
    if (stripped.find("&END") != std::string::npos ||
        stripped.find("&end") != std::string::npos ||
        stripped.find_first_of('/') != std::string::npos) {
      ended = true;
      break;
    }
  }
  if (!ended) throw ParseError("unterminated FCIDUMP header", lineno);

  FcidumpHeader hdr;
  if (!header_int(header, "NORB", hdr.norb))
    throw ParseError("header lacks NORB", lineno);
  if (!header_int(header, "NELEC", hdr.nelec))
    throw ParseError("header lacks NELEC", lineno);
  header_int(header, "MS2", hdr.ms2);
  if (hdr.norb < 0 || hdr.norb > 64)
    throw ParseError("NORB out of supported range [0, 64]", lineno);
  if (hdr.nelec < 0 || (hdr.nelec + hdr.ms2) % 2 != 0 ||
      hdr.nelec < std::abs(hdr.ms2))
    throw ParseError("inconsistent NELEC/MS2", lineno);

  ClusterHamiltonian ham(hdr.norb, (hdr.nelec + hdr.ms2) / 2,
                         (hdr.nelec - hdr.ms2) / 2);
  if (ham.n_alpha > ham.norb || ham.n_beta > ham.norb)
    throw ParseError("more electrons per spin than orbitals", lineno);

  const int n = ham.norb;
  std::vector<char> seen_eri(ham.eri.size(), 0);
  std::vector<char> seen_h(static_cast<std::size_t>(n) * n, 0);
  std::vector<char> seen_eps(n, 0);
  char seen_e0 = 0;
  Eigen::VectorXd eps = Eigen::VectorXd::Zero(n);
  bool any_eps = false;

  auto check_dup = [&](char& seen, double old, double v) {
    if (seen && std::abs(old - v) > 1e-10)
      throw ConsistencyError("line " + std::to_string(lineno) +
                             ": duplicate integral with inconsistent value");
    seen = 1;
  };

  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    double v;
    long p, r, q, s;
    if (!(ls >> v >> p >> r >> q >> s))
      throw ParseError("expected 'value i j k l'", lineno);
    for (long idx : {p, r, q, s})
      if (idx < 0 || idx > n)
        throw IndexError("line " + std::to_string(lineno) + ": index " +
                         std::to_string(idx) + " outside [0, " +
                         std::to_string(n) + "]");
    if (p == 0 && r == 0 && q == 0 && s == 0) {
      check_dup(seen_e0, ham.e0, v);
      ham.e0 = v;
    } else if (p > 0 && r > 0 && q == 0 && s == 0) {
      auto& flag = seen_h[(p - 1) * n + (r - 1)];
      check_dup(flag, ham.h(p - 1, r - 1), v);
      seen_h[(r - 1) * n + (p - 1)] = 1;
      ham.h(p - 1, r - 1) = v;
      ham.h(r - 1, p - 1) = v;
    } else if (p > 0 && r == 0 && q == 0 && s == 0) {
      check_dup(seen_eps[p - 1], eps(p - 1), v);
      eps(p - 1) = v;
      any_eps = true;
    } else if (p > 0 && r > 0 && q > 0 && s > 0) {
      const auto idx = ham.eri_index(p - 1, r - 1, q - 1, s - 1);
      if (seen_eri[idx] && std::abs(ham.eri[idx] - v) > 1e-10)
        throw ConsistencyError("line " + std::to_string(lineno) +
                               ": duplicate integral with inconsistent value");
      ham.set_eri(p - 1, r - 1, q - 1, s - 1, v);
      for (auto [a, b, c, d] : {std::array<long, 4>{p, r, q, s},
                                {r, p, q, s},
                                {p, r, s, q},
                                {r, p, s, q},
                                {q, s, p, r},
                                {s, q, p, r},
                                {q, s, r, p},
                                {s, q, r, p}})
        seen_eri[ham.eri_index(a - 1, b - 1, c - 1, d - 1)] = 1;
    } else {
      throw IndexError("line " + std::to_string(lineno) +
                       ": unrecognized index pattern");
    }
  }
  if (any_eps) ham.eps = eps;
  return ham;
}

ClusterHamiltonian read_fcidump(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_fcidump(in);
}

void write_fcidump(const ClusterHamiltonian& ham, std::ostream& out) {
  const int n = ham.norb;
  out << " &FCI NORB=" << n << ",NELEC=" << ham.n_electrons()
      << ",MS2=" << ham.n_alpha - ham.n_beta << ",\n  ORBSYM=";
  for (int i = 0; i < n; ++i) out << "1,";
  out << "\n  ISYM=1,\n &END\n";
  out << std::scientific << std::setprecision(17);
  // Canonical representatives: p >= r, q >= s, (p,r) >= (q,s).
  for (int p = 0; p < n; ++p)
    for (int r = 0; r <= p; ++r)
      for (int q = 0; q <= p; ++q)
        for (int s = 0; s <= (q == p ? r : q); ++s) {
          const double v = ham.eri_at(p, r, q, s);
          if (v != 0.0)
            out << v << ' ' << p + 1 << ' ' << r + 1 << ' ' << q + 1 << ' '
                << s + 1 << '\n';
        }
  for (int p = 0; p < n; ++p)
    for (int r = 0; r <= p; ++r)
      if (ham.h(p, r) != 0.0)
        out << ham.h(p, r) << ' ' << p + 1 << ' ' << r + 1 << " 0 0\n";
  for (int p = 0; p < ham.eps.size(); ++p)
    out << ham.eps(p) << ' ' << p + 1 << " 0 0 0\n";
  out << ham.e0 << " 0 0 0 0\n";
}

void write_fcidump(const ClusterHamiltonian& ham,
                   const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_fcidump(ham, out);
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace ewfsqd
