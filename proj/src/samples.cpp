#include <algorithm>
#include <fstream>
#include <sstream>

#include "ewfsqd/errors.hpp"
#include "ewfsqd/hamio.hpp"

namespace ewfsqd {

std::string to_bitstring(const Determinant& d, int norb) {
  std::string s(2 * static_cast<std::size_t>(norb), '0');
  for (int p = 0; p < norb; ++p) {
    if ((d.alpha >> p) & 1U) s[p] = '1';
    if ((d.beta >> p) & 1U) s[norb + p] = '1';
  }
  return s;
}

Determinant from_bitstring(const std::string& bits, int norb) {
  if (bits.size() != 2 * static_cast<std::size_t>(norb))
    throw ParseError("bitstring length " + std::to_string(bits.size()) +
                     " does not match 2*norb=" + std::to_string(2 * norb));
  Determinant d;
  for (int k = 0; k < 2 * norb; ++k) {
    const char c = bits[k];
    if (c != '0' && c != '1')
      throw ParseError("bitstring contains non-binary character");
    if (c == '1') {
      if (k < norb)
        d.alpha |= Mask{1} << k;
      else
        d.beta |= Mask{1} << (k - norb);
    }
  }
  return d;
}

void SampleSet::add(const Determinant& bits, std::uint64_t count) {
  if (count == 0) return;
  auto it = std::lower_bound(
      entries_.begin(), entries_.end(), bits,
      [](const SampleEntry& e, const Determinant& b) { return e.bits < b; });
  if (it != entries_.end() && it->bits == bits)
    it->count += count;
  else
    entries_.insert(it, SampleEntry{bits, count});
  total_ += count;
}

SampleSet SampleSet::from_entries(int norb, std::vector<SampleEntry> entries) {
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.bits < b.bits; });
  SampleSet set(norb);
  for (const auto& e : entries) {
    if (e.count == 0) continue;
    if (!set.entries_.empty() && set.entries_.back().bits == e.bits)
      set.entries_.back().count += e.count;
    else
      set.entries_.push_back(e);
    set.total_ += e.count;
  }
  return set;
}

SampleSet parse_samples(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  int norb = -1;
  std::vector<SampleEntry> raw;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (line[line.find_first_not_of(" \t")] == '#') continue;
    std::istringstream ls(line);
    std::string bits;
    long long count = 0;
    if (!(ls >> bits >> count))
      throw ParseError("expected 'bitstring count'", lineno);
    if (count <= 0) throw ParseError("count must be positive", lineno);
    if (bits.size() % 2 != 0 || bits.size() > 128)
      throw ParseError("bitstring length must be even and at most 128",
                       lineno);
    const int m = static_cast<int>(bits.size() / 2);
    if (norb < 0)
      norb = m;
    else if (m != norb)
      throw ParseError("ragged bitstring lengths", lineno);
    try {
      raw.push_back({from_bitstring(bits, m), static_cast<std::uint64_t>(count)});
    } catch (const ParseError& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  if (raw.empty())
    throw ParseError("empty sample file: recovery needs at least one shot");
  return SampleSet::from_entries(norb, std::move(raw));
}

SampleSet load_samples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_samples(in);
}

void write_samples(const SampleSet& set, std::ostream& out) {
  for (const auto& e : set.entries())
    out << to_bitstring(e.bits, set.norb()) << ' ' << e.count << '\n';
}

void save_samples(const SampleSet& set, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_samples(set, out);
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace ewfsqd
