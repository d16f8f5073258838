#include "ebgcn/graph.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "ebgcn/errors.hpp"
#include "ebgcn/rng.hpp"

namespace fs = std::filesystem;

namespace ebgcn {

void GraphDataset::validate() const {
  const int n = num_nodes;
  if (n <= 0) throw validation_error("dataset: num_nodes must be positive");
  if (num_classes <= 0) throw validation_error("dataset: num_classes must be positive");
  if (features.rows() != n) throw validation_error("dataset: feature rows != num_nodes");
  if (static_cast<int>(labels.size()) != n ||
      static_cast<int>(train_mask.size()) != n ||
      static_cast<int>(val_mask.size()) != n ||
      static_cast<int>(test_mask.size()) != n) {
    throw validation_error("dataset: per-node array length != num_nodes");
  }
  for (size_t e = 0; e < edges.size(); ++e) {
    auto [i, j] = edges[e];
    if (!(0 <= i && i < j && j < n)) {
      throw validation_error("dataset: edge " + std::to_string(e) +
                             " violates 0 <= i < j < N");
    }
    if (e > 0 && !(edges[e - 1] < edges[e])) {
      throw validation_error("dataset: edges not sorted/duplicate-free at " +
                             std::to_string(e));
    }
  }
  int train_count = 0;
  for (int v = 0; v < n; ++v) {
    if (labels[v] < 0 || labels[v] >= num_classes) {
      throw validation_error("dataset: label out of range at node " + std::to_string(v));
    }
    const int in = (train_mask[v] != 0) + (val_mask[v] != 0) + (test_mask[v] != 0);
    if (in > 1) throw validation_error("dataset: overlapping splits at node " + std::to_string(v));
    train_count += (train_mask[v] != 0);
  }
  if (train_count == 0) throw validation_error("dataset: empty train mask");
  if (!features.allFinite()) throw validation_error("dataset: non-finite feature");
}

// ---------------------------------------------------------------------------
// Bundle I/O. Five files per directory: meta, edges, features, labels,
// splits. All binary payloads little-endian fixed-width.

namespace {

std::vector<uint8_t> read_file(const fs::path& p, const char* what) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw io_error(std::string("bundle: missing or unreadable file: ") + what +
                         " (" + p.string() + ")");
  return std::vector<uint8_t>((std::istreambuf_iterator<char>(f)),
                              std::istreambuf_iterator<char>());
}

void check_size(const std::vector<uint8_t>& buf, size_t expect, const char* what) {
  if (buf.size() != expect) {
    throw format_error(std::string("bundle: ") + what + ": expected " +
                       std::to_string(expect) + " bytes, got " +
                       std::to_string(buf.size()));
  }
}

uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t get_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

float get_f32(const uint8_t* p) {
  uint32_t u = get_u32(p);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_f32(std::vector<uint8_t>& out, float f) {
  uint32_t u;
  std::memcpy(&u, &f, 4);
  put_u32(out, u);
}

void write_file(const fs::path& p, const std::vector<uint8_t>& bytes) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("bundle: cannot open for writing: " + p.string());
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  f.flush();
  if (!f) throw io_error("bundle: write failed: " + p.string());
}

std::vector<uint8_t> unpack_bitmap(const uint8_t* p, int n) {
  std::vector<uint8_t> out(n, 0);
  for (int i = 0; i < n; ++i) out[i] = (p[i / 8] >> (i % 8)) & 1u;
  return out;
}

void pack_bitmap(std::vector<uint8_t>& out, const std::vector<uint8_t>& bits) {
  const size_t start = out.size();
  out.resize(start + (bits.size() + 7) / 8, 0);
  for (size_t i = 0; i < bits.size(); ++i) {
    if (bits[i]) out[start + i / 8] |= static_cast<uint8_t>(1u << (i % 8));
  }
}

}  // namespace

GraphDataset load_bundle(const std::string& dir) {
  const fs::path root(dir);

  // meta: key=value lines with exactly N, M, C, F, name.
  std::ifstream metaf(root / "meta");
  if (!metaf) throw io_error("bundle: missing or unreadable file: meta (" +
                             (root / "meta").string() + ")");
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(metaf, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw format_error("bundle: meta line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  for (const char* key : {"N", "M", "C", "F", "name"}) {
    if (!kv.count(key)) throw format_error(std::string("bundle: meta missing key ") + key);
  }
  if (kv.size() != 5) throw format_error("bundle: meta has unknown keys");
  long n_l, m_l, c_l, f_l;
  try {
    n_l = std::stol(kv["N"]);
    m_l = std::stol(kv["M"]);
    c_l = std::stol(kv["C"]);
    f_l = std::stol(kv["F"]);
  } catch (const std::exception&) {
    throw format_error("bundle: meta counts not parseable");
  }
  if (n_l <= 0 || m_l < 0 || c_l <= 0 || f_l <= 0 || f_l > 65535) {
    throw format_error("bundle: meta counts out of range");
  }
  const int n = static_cast<int>(n_l);
  const int m = static_cast<int>(m_l);
  const int c = static_cast<int>(c_l);
  const int f = static_cast<int>(f_l);

  GraphDataset ds;
  ds.name = kv["name"];
  ds.num_nodes = n;
  ds.num_classes = f;

  const auto edge_buf = read_file(root / "edges", "edges");
  check_size(edge_buf, static_cast<size_t>(m) * 8, "edges");
  ds.edges.reserve(m);
  for (int e = 0; e < m; ++e) {
    uint32_t a = get_u32(edge_buf.data() + 8 * e);
    uint32_t b = get_u32(edge_buf.data() + 8 * e + 4);
    if (a >= static_cast<uint32_t>(n) || b >= static_cast<uint32_t>(n)) {
      throw validation_error("bundle: edge endpoint >= N at record " + std::to_string(e));
    }
    if (a == b) throw validation_error("bundle: self-loop at record " + std::to_string(e));
    if (a > b) std::swap(a, b);
    ds.edges.emplace_back(static_cast<int32_t>(a), static_cast<int32_t>(b));
  }
  std::sort(ds.edges.begin(), ds.edges.end());
  ds.edges.erase(std::unique(ds.edges.begin(), ds.edges.end()), ds.edges.end());

  const auto feat_buf = read_file(root / "features", "features");
  check_size(feat_buf, static_cast<size_t>(n) * c * 4, "features");
  ds.features.resize(n, c);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < c; ++j) {
      ds.features(i, j) = static_cast<double>(
          get_f32(feat_buf.data() + 4 * (static_cast<size_t>(i) * c + j)));
    }
  }

  const auto label_buf = read_file(root / "labels", "labels");
  check_size(label_buf, static_cast<size_t>(n) * 2, "labels");
  ds.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    const uint16_t y = get_u16(label_buf.data() + 2 * i);
    if (y >= f) {
      throw validation_error("bundle: label " + std::to_string(y) + " >= F at node " +
                             std::to_string(i));
    }
    ds.labels[i] = y;
  }

  const auto split_buf = read_file(root / "splits", "splits");
  const size_t bitmap = (static_cast<size_t>(n) + 7) / 8;
  check_size(split_buf, 3 * bitmap, "splits");
  ds.train_mask = unpack_bitmap(split_buf.data(), n);
  ds.val_mask = unpack_bitmap(split_buf.data() + bitmap, n);
  ds.test_mask = unpack_bitmap(split_buf.data() + 2 * bitmap, n);

  ds.validate();
  return ds;
}

void save_bundle(const GraphDataset& ds, const std::string& dir) {
  ds.validate();
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec || !fs::is_directory(root)) {
    throw io_error("bundle: cannot create directory: " + root.string());
  }

  std::ostringstream meta;
  meta << "N=" << ds.num_nodes << "\n"
       << "M=" << ds.num_edges() << "\n"
       << "C=" << ds.num_features() << "\n"
       << "F=" << ds.num_classes << "\n"
       << "name=" << ds.name << "\n";
  const std::string meta_s = meta.str();
  write_file(root / "meta",
             std::vector<uint8_t>(meta_s.begin(), meta_s.end()));

  std::vector<uint8_t> buf;
  buf.reserve(static_cast<size_t>(ds.num_edges()) * 8);
  for (auto [i, j] : ds.edges) {
    put_u32(buf, static_cast<uint32_t>(i));
    put_u32(buf, static_cast<uint32_t>(j));
  }
  write_file(root / "edges", buf);

  buf.clear();
  buf.reserve(static_cast<size_t>(ds.num_nodes) * ds.num_features() * 4);
  for (int i = 0; i < ds.num_nodes; ++i) {
    for (int j = 0; j < ds.num_features(); ++j) {
      put_f32(buf, static_cast<float>(ds.features(i, j)));
    }
  }
  write_file(root / "features", buf);

  buf.clear();
  for (int i = 0; i < ds.num_nodes; ++i) {
    put_u16(buf, static_cast<uint16_t>(ds.labels[i]));
  }
  write_file(root / "labels", buf);

  buf.clear();
  pack_bitmap(buf, ds.train_mask);
  pack_bitmap(buf, ds.val_mask);
  pack_bitmap(buf, ds.test_mask);
  write_file(root / "splits", buf);
}

// ---------------------------------------------------------------------------

GraphDataset gen_synthetic(uint64_t seed, int blocks, int nodes_per_block,
                           double p_in, double p_out, int feat_dim) {
  if (blocks < 1 || nodes_per_block < 1 || feat_dim < 1) {
    throw argument_error("gen_synthetic: counts must be >= 1");
  }
  if (!(p_in >= 0.0 && p_in <= 1.0 && p_out >= 0.0 && p_out <= 1.0)) {
    throw argument_error("gen_synthetic: probabilities must be in [0,1]");
  }
  if (!(p_in > p_out)) {
    throw argument_error("gen_synthetic: requires p_in > p_out");
  }

  const int n = blocks * nodes_per_block;
  GraphDataset ds;
  ds.num_nodes = n;
  ds.num_classes = blocks;
  {
    std::ostringstream name;
    name << "synth-s" << seed << "-b" << blocks << "x" << nodes_per_block;
    ds.name = name.str();
  }
  ds.labels.resize(n);
  for (int v = 0; v < n; ++v) ds.labels[v] = v / nodes_per_block;

  // Separate streams per stage so each is reproducible in isolation.
  Rng edge_rng(derive_seed(seed, "synth-edges"));
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double p = (ds.labels[i] == ds.labels[j]) ? p_in : p_out;
      if (edge_rng.bernoulli(p)) ds.edges.emplace_back(i, j);
    }
  }

  // Block-indicator one-hot plus Gaussian noise, quantized to float32 so
  // the on-disk f32 bundle round-trips exactly.
  Rng feat_rng(derive_seed(seed, "synth-features"));
  ds.features.resize(n, feat_dim);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < feat_dim; ++c) {
      double v = 0.5 * feat_rng.normal();
      if (c == ds.labels[i] % feat_dim) v += 1.0;
      ds.features(i, c) = static_cast<double>(static_cast<float>(v));
    }
  }

  Rng split_rng(derive_seed(seed, "synth-splits"));
  ds.train_mask.assign(n, 0);
  ds.val_mask.assign(n, 0);
  ds.test_mask.assign(n, 0);
  const int n_train = std::max<int>(1, static_cast<int>(std::llround(0.1 * nodes_per_block)));
  const int n_val = std::min<int>(nodes_per_block - n_train,
                                  std::max<int>(1, static_cast<int>(std::llround(0.1 * nodes_per_block))));
  for (int b = 0; b < blocks; ++b) {
    std::vector<int> idx(nodes_per_block);
    for (int k = 0; k < nodes_per_block; ++k) idx[k] = b * nodes_per_block + k;
    split_rng.shuffle(idx);
    for (int k = 0; k < nodes_per_block; ++k) {
      if (k < n_train) {
        ds.train_mask[idx[k]] = 1;
      } else if (k < n_train + n_val) {
        ds.val_mask[idx[k]] = 1;
      } else {
        ds.test_mask[idx[k]] = 1;
      }
    }
  }

  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------

NormalizedAdjacency normalize_adjacency(const GraphDataset& ds,
                                        const Vector& edge_values,
                                        const PruneMask* keep) {
  const int n = ds.num_nodes;
  const int m = ds.num_edges();
  if (edge_values.size() != m) {
    throw contract_error("normalize_adjacency: edge_values length " +
                         std::to_string(edge_values.size()) + " != M " + std::to_string(m));
  }
  if (keep && static_cast<int>(keep->size()) != m) {
    throw contract_error("normalize_adjacency: keep mask length != M");
  }

  NormalizedAdjacency a;
  a.n = n;
  a.degree.assign(n, 1.0);  // self-loop value 1 is always present
  for (int e = 0; e < m; ++e) {
    if (keep && !keep->bit(e)) continue;
    const double v = edge_values[e];
    if (!std::isfinite(v)) {
      throw numeric_error("normalize_adjacency: non-finite value at edge " + std::to_string(e));
    }
    auto [i, j] = ds.edges[e];
    a.degree[i] += std::abs(v);
    a.degree[j] += std::abs(v);
  }

  // Adjacency lists including the self-loop, columns ascending.
  struct Ent {
    int32_t col;
    int32_t eid;
  };
  std::vector<std::vector<Ent>> rows(n);
  for (int i = 0; i < n; ++i) rows[i].push_back({i, -1});
  for (int e = 0; e < m; ++e) {
    if (keep && !keep->bit(e)) continue;
    auto [i, j] = ds.edges[e];
    rows[i].push_back({j, e});
    rows[j].push_back({i, e});
  }

  a.row_ptr.assign(n + 1, 0);
  size_t nnz = 0;
  for (int i = 0; i < n; ++i) nnz += rows[i].size();
  a.col.reserve(nnz);
  a.val.reserve(nnz);
  a.edge_id.reserve(nnz);
  for (int i = 0; i < n; ++i) {
    std::sort(rows[i].begin(), rows[i].end(),
              [](const Ent& x, const Ent& y) { return x.col < y.col; });
    for (const Ent& ent : rows[i]) {
      a.col.push_back(ent.col);
      a.edge_id.push_back(ent.eid);
      if (ent.eid < 0) {
        a.val.push_back(1.0 / a.degree[i]);
      } else {
        // same expression for both directions keeps A_hat bitwise symmetric
        a.val.push_back(edge_values[ent.eid] /
                        std::sqrt(a.degree[i] * a.degree[ent.col]));
      }
    }
    a.row_ptr[i + 1] = static_cast<int32_t>(a.col.size());
  }
  return a;
}

Matrix NormalizedAdjacency::multiply(const Matrix& x) const {
  if (x.rows() != n) throw contract_error("NormalizedAdjacency::multiply: row mismatch");
  Matrix y = Matrix::Zero(n, x.cols());
  for (int i = 0; i < n; ++i) {
    for (int32_t idx = row_ptr[i]; idx < row_ptr[i + 1]; ++idx) {
      y.row(i) += val[idx] * x.row(col[idx]);
    }
  }
  return y;
}

Matrix NormalizedAdjacency::to_dense() const {
  Matrix d = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int32_t idx = row_ptr[i]; idx < row_ptr[i + 1]; ++idx) {
      d(i, col[idx]) = val[idx];
    }
  }
  return d;
}

double NormalizedAdjacency::entry(int i, int j) const {
  if (i < 0 || i >= n || j < 0 || j >= n) throw argument_error("entry: index out of range");
  for (int32_t idx = row_ptr[i]; idx < row_ptr[i + 1]; ++idx) {
    if (col[idx] == j) return val[idx];
  }
  return 0.0;
}

}  // namespace ebgcn
