#pragma once

// Brute-force reference for the texture matrices and their features.
//
// Everything here works on explicit (x, y, z) coordinates and pairwise voxel
// enumeration so that it shares no traversal code with the library.

#include <array>
#include <cmath>
#include <cstdlib>
#include <map>
#include <numeric>
#include <string>
#include <vector>

namespace oracle {

struct Grid {
  int nx = 1, ny = 1, nz = 1;
  int ng = 1;
  std::vector<int> level;  // x fastest, 0 = outside

  int at(int x, int y, int z) const {
    if (x < 0 || y < 0 || z < 0 || x >= nx || y >= ny || z >= nz) return 0;
    return level[static_cast<std::size_t>((z * ny + y) * nx + x)];
  }
  bool planar() const { return nz == 1; }
  int voxels() const {
    int n = 0;
    for (int l : level) n += l > 0;
    return n;
  }
};

using Dir = std::array<int, 3>;
using Counts = std::vector<std::vector<long long>>;  // [level-1][column]

/// Unordered directions: of each pair {d, -d} keep the one whose last nonzero
/// component (z, then y, then x) is positive.
inline std::vector<Dir> directions(bool planar) {
  std::vector<Dir> out;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        if (planar && dz != 0) continue;
        if (!dx && !dy && !dz) continue;
        const int lead = dz != 0 ? dz : dy != 0 ? dy : dx;
        if (lead > 0) out.push_back({dx, dy, dz});
      }
  return out;
}

inline bool adjacent(int x0, int y0, int z0, int x1, int y1, int z1) {
  const int dx = std::abs(x0 - x1), dy = std::abs(y0 - y1), dz = std::abs(z0 - z1);
  return std::max({dx, dy, dz}) == 1;
}

inline Counts zeros(int rows, int cols) {
  return Counts(static_cast<std::size_t>(rows), std::vector<long long>(static_cast<std::size_t>(cols), 0));
}

inline Counts glcm(const Grid& g, const Dir& d) {
  Counts m = zeros(g.ng, g.ng);
  for (int z = 0; z < g.nz; ++z)
    for (int y = 0; y < g.ny; ++y)
      for (int x = 0; x < g.nx; ++x) {
        const int a = g.at(x, y, z), b = g.at(x + d[0], y + d[1], z + d[2]);
        if (a && b) {
          ++m[a - 1][b - 1];
          ++m[b - 1][a - 1];
        }
      }
  return m;
}

/// A run of length L starting at s exists when L voxels share a level and both
/// neighbours along the line hold another level (or lie outside).
inline Counts glrlm(const Grid& g, const Dir& d, int max_len) {
  Counts m = zeros(g.ng, max_len);
  for (int z = 0; z < g.nz; ++z)
    for (int y = 0; y < g.ny; ++y)
      for (int x = 0; x < g.nx; ++x) {
        const int l = g.at(x, y, z);
        if (!l) continue;
        if (g.at(x - d[0], y - d[1], z - d[2]) == l) continue;
        for (int len = 1; len <= max_len; ++len) {
          bool same = true;
          for (int t = 0; t < len; ++t) same = same && g.at(x + t * d[0], y + t * d[1], z + t * d[2]) == l;
          if (!same) break;
          if (g.at(x + len * d[0], y + len * d[1], z + len * d[2]) != l) ++m[l - 1][len - 1];
        }
      }
  return m;
}

struct Voxel {
  int x, y, z, l;
};

inline std::vector<Voxel> roi(const Grid& g) {
  std::vector<Voxel> v;
  for (int z = 0; z < g.nz; ++z)
    for (int y = 0; y < g.ny; ++y)
      for (int x = 0; x < g.nx; ++x)
        if (g.at(x, y, z)) v.push_back({x, y, z, g.at(x, y, z)});
  return v;
}

/// Zones by union-find over every adjacent same-level voxel pair.
inline Counts glszm(const Grid& g) {
  const auto v = roi(g);
  std::vector<std::size_t> parent(v.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i];
    return i;
  };
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = i + 1; j < v.size(); ++j)
      if (v[i].l == v[j].l && adjacent(v[i].x, v[i].y, v[i].z, v[j].x, v[j].y, v[j].z)) parent[find(i)] = find(j);
  std::map<std::size_t, int> size;
  for (std::size_t i = 0; i < v.size(); ++i) ++size[find(i)];
  int largest = 1;
  for (const auto& [r, s] : size) largest = std::max(largest, s);
  Counts m = zeros(g.ng, largest);
  for (const auto& [r, s] : size) ++m[v[r].l - 1][s - 1];
  return m;
}

inline Counts gldm(const Grid& g) {
  const auto v = roi(g);
  Counts m = zeros(g.ng, g.planar() ? 9 : 27);
  for (const auto& a : v) {
    int k = 0;
    for (const auto& b : v)
      if (b.l == a.l && adjacent(a.x, a.y, a.z, b.x, b.y, b.z)) ++k;
    ++m[a.l - 1][k];
  }
  return m;
}

struct Ngtdm {
  std::vector<double> s;
  std::vector<long long> n;
};

inline Ngtdm ngtdm(const Grid& g) {
  Ngtdm out{std::vector<double>(static_cast<std::size_t>(g.ng), 0.0), std::vector<long long>(static_cast<std::size_t>(g.ng), 0)};
  const auto v = roi(g);
  for (const auto& a : v) {
    long sum = 0;
    int count = 0;
    for (const auto& b : v)
      if (adjacent(a.x, a.y, a.z, b.x, b.y, b.z)) {
        sum += b.l;
        ++count;
      }
    if (!count) continue;
    out.s[a.l - 1] += std::abs(a.l - static_cast<double>(sum) / count);
    ++out.n[a.l - 1];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Features, written directly from the textbook definitions.

using Features = std::map<std::string, double>;

inline double plogp(double p) { return p > 0 ? p * std::log2(p) : 0.0; }

inline Features glcm_features(const Grid& g) {
  const int ng = g.ng;
  std::vector<double> p(static_cast<std::size_t>(ng * ng), 0.0);
  int valid = 0;
  for (const auto& d : directions(g.planar())) {
    const auto m = glcm(g, d);
    double total = 0;
    for (const auto& r : m)
      for (auto c : r) total += static_cast<double>(c);
    if (total == 0) continue;
    ++valid;
    for (int i = 0; i < ng; ++i)
      for (int j = 0; j < ng; ++j) p[static_cast<std::size_t>(i * ng + j)] += static_cast<double>(m[i][j]) / total;
  }
  Features f;
  if (!valid) return f;
  for (auto& x : p) x /= valid;
  auto P = [&](int i, int j) { return p[static_cast<std::size_t>((i - 1) * ng + (j - 1))]; };
  std::vector<double> px(static_cast<std::size_t>(ng) + 1, 0.0);
  for (int i = 1; i <= ng; ++i)
    for (int j = 1; j <= ng; ++j) px[i] += P(i, j);
  double mu = 0;
  for (int i = 1; i <= ng; ++i) mu += i * px[i];
  double sigma2 = 0;
  for (int i = 1; i <= ng; ++i) sigma2 += (i - mu) * (i - mu) * px[i];
  double energy = 0, contrast = 0, ent = 0, idm = 0, id = 0, shade = 0, prom = 0, tend = 0, ac = 0, cov = 0;
  std::vector<double> pminus(static_cast<std::size_t>(ng), 0.0);
  for (int i = 1; i <= ng; ++i)
    for (int j = 1; j <= ng; ++j) {
      const double v = P(i, j);
      energy += v * v;
      contrast += (i - j) * (i - j) * v;
      ent -= plogp(v);
      idm += v / (1.0 + (i - j) * (i - j));
      id += v / (1.0 + std::abs(i - j));
      shade += std::pow(i + j - 2 * mu, 3) * v;
      prom += std::pow(i + j - 2 * mu, 4) * v;
      tend += std::pow(i + j - 2 * mu, 2) * v;
      ac += i * j * v;
      cov += (i - mu) * (j - mu) * v;
      pminus[static_cast<std::size_t>(std::abs(i - j))] += v;
    }
  double dent = 0;
  for (double v : pminus) dent -= plogp(v);
  f["glcm_joint_energy"] = energy;
  f["glcm_contrast"] = contrast;
  f["glcm_correlation"] = sigma2 > 0 ? cov / sigma2 : 1.0;
  f["glcm_joint_entropy"] = ent;
  f["glcm_idm"] = idm;
  f["glcm_inverse_difference"] = id;
  f["glcm_cluster_shade"] = shade;
  f["glcm_cluster_prominence"] = prom;
  f["glcm_cluster_tendency"] = tend;
  f["glcm_autocorrelation"] = ac;
  f["glcm_joint_average"] = mu;
  f["glcm_difference_entropy"] = dent;
  return f;
}

inline int max_extent(const Grid& g) { return std::max({g.nx, g.ny, g.nz}); }

inline Features glrlm_features(const Grid& g) {
  const int ng = g.ng, nl = max_extent(g);
  const auto dirs = directions(g.planar());
  std::vector<std::vector<double>> r(static_cast<std::size_t>(ng), std::vector<double>(static_cast<std::size_t>(nl), 0.0));
  for (const auto& d : dirs) {
    const auto m = glrlm(g, d, nl);
    for (int i = 0; i < ng; ++i)
      for (int j = 0; j < nl; ++j) r[i][j] += static_cast<double>(m[i][j]);
  }
  for (auto& row : r)
    for (auto& v : row) v /= static_cast<double>(dirs.size());
  double nr = 0;
  for (const auto& row : r)
    for (double v : row) nr += v;
  Features f;
  if (nr <= 0) return f;
  double sre = 0, lre = 0, lg = 0, hg = 0, ent = 0, gln = 0, rln = 0;
  for (int i = 0; i < ng; ++i) {
    double row = 0;
    for (int j = 0; j < nl; ++j) {
      const double v = r[i][j], len = j + 1.0, lev = i + 1.0;
      sre += v / (len * len);
      lre += v * len * len;
      lg += v / (lev * lev);
      hg += v * lev * lev;
      ent -= plogp(v / nr);
      row += v;
    }
    gln += row * row;
  }
  for (int j = 0; j < nl; ++j) {
    double col = 0;
    for (int i = 0; i < ng; ++i) col += r[i][j];
    rln += col * col;
  }
  f["glrlm_sre"] = sre / nr;
  f["glrlm_lre"] = lre / nr;
  f["glrlm_gln"] = gln / nr;
  f["glrlm_glnn"] = gln / (nr * nr);
  f["glrlm_rln"] = rln / nr;
  f["glrlm_rlnn"] = rln / (nr * nr);
  f["glrlm_rp"] = nr / g.voxels();
  f["glrlm_lglre"] = lg / nr;
  f["glrlm_hglre"] = hg / nr;
  f["glrlm_run_entropy"] = ent;
  return f;
}

/// Statistics shared by zone and dependence matrices; column j means size j+1.
struct SizeStats {
  double n = 0, small = 0, large = 0, gln = 0, sn = 0, ent = 0, var = 0;
};

inline SizeStats size_stats(const Counts& m) {
  SizeStats s;
  for (const auto& r : m)
    for (auto c : r) s.n += static_cast<double>(c);
  if (s.n <= 0) return s;
  const std::size_t cols = m.front().size();
  std::vector<double> col(cols, 0.0);
  for (const auto& r : m) {
    double row = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double c = static_cast<double>(r[j]), size = j + 1.0;
      s.small += c / (size * size);
      s.large += c * size * size;
      s.ent -= plogp(c / s.n);
      row += c;
      col[j] += c;
    }
    s.gln += row * row;
  }
  double mean = 0;
  for (std::size_t j = 0; j < cols; ++j) mean += (j + 1.0) * col[j] / s.n;
  for (std::size_t j = 0; j < cols; ++j) {
    s.sn += col[j] * col[j];
    s.var += col[j] / s.n * (j + 1.0 - mean) * (j + 1.0 - mean);
  }
  return s;
}

inline Features glszm_features(const Grid& g) {
  const auto s = size_stats(glszm(g));
  Features f;
  if (s.n <= 0) return f;
  f["glszm_sae"] = s.small / s.n;
  f["glszm_lae"] = s.large / s.n;
  f["glszm_zp"] = s.n / g.voxels();
  f["glszm_gln"] = s.gln / s.n;
  f["glszm_glnn"] = s.gln / (s.n * s.n);
  f["glszm_szn"] = s.sn / s.n;
  f["glszm_sznn"] = s.sn / (s.n * s.n);
  f["glszm_zone_entropy"] = s.ent;
  return f;
}

inline Features gldm_features(const Grid& g) {
  const auto s = size_stats(gldm(g));
  Features f;
  if (s.n <= 0) return f;
  f["gldm_sde"] = s.small / s.n;
  f["gldm_lde"] = s.large / s.n;
  f["gldm_dn"] = s.sn / s.n;
  f["gldm_dnn"] = s.sn / (s.n * s.n);
  f["gldm_gln"] = s.gln / s.n;
  f["gldm_dependence_entropy"] = s.ent;
  f["gldm_dependence_variance"] = s.var;
  return f;
}

inline Features ngtdm_features(const Grid& g, double coarseness_cap) {
  const auto m = ngtdm(g);
  double nvp = 0;
  for (auto c : m.n) nvp += static_cast<double>(c);
  Features f;
  if (nvp <= 0) return f;
  const int ng = g.ng;
  std::vector<double> p(static_cast<std::size_t>(ng));
  int ngp = 0;
  for (int i = 0; i < ng; ++i) {
    p[i] = m.n[i] / nvp;
    ngp += p[i] > 0;
  }
  double ps = 0, ssum = 0;
  for (int i = 0; i < ng; ++i) {
    ps += p[i] * m.s[i];
    ssum += m.s[i];
  }
  double con = 0, bden = 0, cx = 0, st = 0;
  for (int i = 0; i < ng; ++i)
    for (int j = 0; j < ng; ++j) {
      if (p[i] == 0 || p[j] == 0) continue;
      const double a = i + 1.0, b = j + 1.0;
      con += p[i] * p[j] * (a - b) * (a - b);
      bden += std::abs(a * p[i] - b * p[j]);
      cx += std::abs(a - b) * (p[i] * m.s[i] + p[j] * m.s[j]) / (p[i] + p[j]);
      st += (p[i] + p[j]) * (a - b) * (a - b);
    }
  f["ngtdm_coarseness"] = ps > 0 ? 1.0 / ps : coarseness_cap;
  f["ngtdm_contrast"] = ngp > 1 ? con / (ngp * (ngp - 1.0)) * ssum / nvp : 0.0;
  f["ngtdm_busyness"] = bden > 0 ? ps / bden : 0.0;
  f["ngtdm_complexity"] = cx / nvp;
  f["ngtdm_strength"] = ssum > 0 ? st / ssum : 0.0;
  return f;
}

}  // namespace oracle
