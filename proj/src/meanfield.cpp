#include <Eigen/Eigenvalues>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "ewfsqd/errors.hpp"
#include "ewfsqd/hamio.hpp"

namespace ewfsqd {

namespace {

// Token reader that remembers which line the current token came from.
class TokenReader {
 public:
  explicit TokenReader(std::istream& in) : in_(in) {}

  bool next(std::string& tok) {
    while (!(cur_ >> tok)) {
      std::string line;
      if (!std::getline(in_, line)) return false;
      ++line_;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      cur_.clear();
      cur_.str(line);
    }
    return true;
  }

  std::string word(const char* what) {
    std::string tok;
    if (!next(tok)) throw ParseError(std::string("expected ") + what, line_);
    return tok;
  }

  template <class T>
  T number(const char* what) {
    const std::string tok = word(what);
    std::istringstream ss(tok);
    T v;
    if (!(ss >> v) || !ss.eof())
      throw ParseError(std::string("bad ") + what + " '" + tok + "'", line_);
    return v;
  }

  std::size_t line() const { return line_; }

 private:
  std::istream& in_;
  std::istringstream cur_;
  std::size_t line_ = 0;
};

Eigen::MatrixXd read_matrix(TokenReader& tr, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = tr.number<double>("matrix entry");
  return m;
}

void expect_dims(bool ok, const std::string& name, std::size_t line) {
  if (!ok) throw ParseError("dimension mismatch in block '" + name + "'", line);
}

}  // namespace

void MeanFieldBundle::validate(const BundleTolerances& tol) const {
  const int n = n_ao;
  auto shape = [&](const Eigen::MatrixXd& m, int r, int c, const char* name) {
    if (m.rows() != r || m.cols() != c)
      throw ValidationError("dimension", std::string("matrix ") + name +
                                             " has wrong shape");
  };
  shape(S, n, n, "S");
  shape(C, n, n_mo, "C");
  shape(D, n, n, "D");
  shape(h, n, n, "h");
  if (eps.size() != n_mo)
    throw ValidationError("dimension", "eps length differs from n_mo");
  if (eri.size() != static_cast<std::size_t>(n) * n * n * n)
    throw ValidationError("dimension", "eri size differs from n_ao^4");
  if (static_cast<int>(ao_atom.size()) != n)
    throw ValidationError("dimension", "ao_atom length differs from n_ao");

  if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-10)
    throw ValidationError("overlap symmetry", "S is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw ValidationError("overlap positivity", "S is not positive definite");

  const Eigen::MatrixXd ctsc = C.transpose() * S * C;
  const double ortho =
      (ctsc - Eigen::MatrixXd::Identity(n_mo, n_mo)).cwiseAbs().maxCoeff();
  if (ortho > tol.orthonormality)
    throw ValidationError("orthonormality",
                          "C^T S C deviates from identity by " +
                              std::to_string(ortho));

  const double trace = (D * S).trace();
  if (std::abs(trace - n_elec) > tol.electron_count)
    throw ValidationError("electron count", "trace(D S) = " +
                                                std::to_string(trace) +
                                                " but n_elec = " +
                                                std::to_string(n_elec));

  // D/2 idempotent in the symmetrically orthogonalized basis.
  const Eigen::VectorXd sq = es.eigenvalues().cwiseSqrt();
  const Eigen::MatrixXd s_half =
      es.eigenvectors() * sq.asDiagonal() * es.eigenvectors().transpose();
  const Eigen::MatrixXd p = 0.5 * s_half * D * s_half;
  const double idem = (p * p - p).cwiseAbs().maxCoeff();
  if (idem > tol.idempotency)
    throw ValidationError("idempotency",
                          "D/2 not idempotent (deviation " +
                              std::to_string(idem) + ")");
}

MeanFieldBundle parse_meanfield_bundle(std::istream& in,
                                       const BundleTolerances& tol) {
  TokenReader tr(in);
  MeanFieldBundle mf;
  mf.n_ao = -1;
  mf.n_mo = -1;
  mf.n_elec = -1;
  bool have_e_nuc = false;
  std::string tok;
  while (tr.next(tok)) {
    if (tok == "end") break;
    if (tok == "format") {
      const auto kind = tr.word("format name");
      const int version = tr.number<int>("format version");
      if (kind != "ewfsqd-meanfield" || version != 1)
        throw ParseError("unsupported bundle format", tr.line());
    } else if (tok == "label") {
      mf.label = tr.word("label");
    } else if (tok == "n_ao") {
      mf.n_ao = tr.number<int>("n_ao");
    } else if (tok == "n_mo") {
      mf.n_mo = tr.number<int>("n_mo");
    } else if (tok == "n_elec") {
      mf.n_elec = tr.number<int>("n_elec");
    } else if (tok == "scalar") {
      const auto name = tr.word("scalar name");
      const double v = tr.number<double>("scalar value");
      if (name == "e_nuc") {
        mf.e_nuc = v;
        have_e_nuc = true;
      } else if (name == "e_hf") {
        mf.e_hf = v;
      }
    } else if (tok == "ints") {
      const auto name = tr.word("block name");
      const int len = tr.number<int>("length");
      std::vector<int> vals(len);
      for (auto& v : vals) v = tr.number<int>("integer entry");
      if (name == "ao_atom") mf.ao_atom = std::move(vals);
    } else if (tok == "vector") {
      const auto name = tr.word("block name");
      const int len = tr.number<int>("length");
      Eigen::VectorXd v(len);
      for (int i = 0; i < len; ++i) v(i) = tr.number<double>("vector entry");
      if (name == "eps") mf.eps = std::move(v);
    } else if (tok == "matrix") {
      const auto name = tr.word("block name");
      const int rows = tr.number<int>("rows");
      const int cols = tr.number<int>("cols");
      const auto line = tr.line();
      if (mf.n_ao < 0)
        throw ParseError("n_ao must precede matrix blocks", line);
      auto m = read_matrix(tr, rows, cols);
      if (name == "S") {
        expect_dims(rows == mf.n_ao && cols == mf.n_ao, name, line);
        mf.S = std::move(m);
      } else if (name == "C") {
        expect_dims(rows == mf.n_ao && (mf.n_mo < 0 || cols == mf.n_mo), name,
                    line);
        mf.C = std::move(m);
      } else if (name == "D") {
        expect_dims(rows == mf.n_ao && cols == mf.n_ao, name, line);
        mf.D = std::move(m);
      } else if (name == "h") {
        expect_dims(rows == mf.n_ao && cols == mf.n_ao, name, line);
        mf.h = std::move(m);
      }
    } else if (tok == "tensor4") {
      const auto name = tr.word("block name");
      int dims[4];
      for (int& d : dims) d = tr.number<int>("dimension");
      const auto line = tr.line();
      for (int d : dims) expect_dims(d == mf.n_ao, name, line);
      std::vector<double> t(static_cast<std::size_t>(dims[0]) * dims[1] *
                            dims[2] * dims[3]);
      for (auto& v : t) v = tr.number<double>("tensor entry");
      if (name == "eri") mf.eri = std::move(t);
    } else {
      throw ParseError("unknown bundle keyword '" + tok + "'", tr.line());
    }
  }
  if (mf.n_ao < 0 || mf.n_mo < 0 || mf.n_elec < 0 || !have_e_nuc)
    throw ParseError("bundle lacks n_ao, n_mo, n_elec or e_nuc", tr.line());
  if (mf.n_elec % 2 != 0)
    throw ValidationError("closed shell", "odd electron count in bundle");
  mf.validate(tol);
  return mf;
}

MeanFieldBundle load_meanfield_bundle(const std::filesystem::path& path,
                                      const BundleTolerances& tol) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_meanfield_bundle(in, tol);
}

void write_meanfield_bundle(const MeanFieldBundle& mf, std::ostream& out) {
  out << "# ewfsqd mean-field bundle\nformat ewfsqd-meanfield 1\n";
  if (!mf.label.empty()) out << "label " << mf.label << '\n';
  out << "n_ao " << mf.n_ao << "\nn_mo " << mf.n_mo << "\nn_elec "
      << mf.n_elec << '\n';
  out << std::setprecision(17);
  out << "scalar e_nuc " << mf.e_nuc << '\n';
  if (!std::isnan(mf.e_hf)) out << "scalar e_hf " << mf.e_hf << '\n';
  out << "ints ao_atom " << mf.ao_atom.size() << '\n';
  for (std::size_t i = 0; i < mf.ao_atom.size(); ++i)
    out << (i ? " " : "") << mf.ao_atom[i];
  out << '\n';
  auto mat = [&](const char* name, const Eigen::MatrixXd& m) {
    out << "matrix " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (int i = 0; i < m.rows(); ++i) {
      for (int j = 0; j < m.cols(); ++j) out << (j ? " " : "") << m(i, j);
      out << '\n';
    }
  };
  mat("S", mf.S);
  mat("C", mf.C);
  mat("D", mf.D);
  mat("h", mf.h);
  out << "vector eps " << mf.eps.size() << '\n';
  for (int i = 0; i < mf.eps.size(); ++i) out << (i ? " " : "") << mf.eps(i);
  out << '\n';
  const int n = mf.n_ao;
  out << "tensor4 eri " << n << ' ' << n << ' ' << n << ' ' << n << '\n';
  const std::size_t row = static_cast<std::size_t>(n) * n;
  for (std::size_t i = 0; i < mf.eri.size(); ++i)
    out << mf.eri[i] << ((i + 1) % row == 0 ? '\n' : ' ');
  out << "end\n";
}

}  // namespace ewfsqd
