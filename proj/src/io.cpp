#include "gkelab/io.hpp"

#include <bit>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

// The on-disk contract is little-endian; every supported platform is.
static_assert(std::endian::native == std::endian::little,
              "binary field files are little-endian");

namespace gkelab {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  std::string last = trim(cur);
  if (!last.empty() || !out.empty()) out.push_back(last);
  return out;
}

}  // namespace

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_int(long long v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%lld", v);
  return buf;
}

std::string csv_row(const std::vector<std::string>& cells) {
  std::string out;
  for (size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  out += '\n';
  return out;
}

const std::string* Config::find(const std::string& key) const {
  for (size_t i = 0; i < items.size(); ++i)
    if (items[i].first == key) {
      mark_used(key);
      return &items[i].second;
    }
  return nullptr;
}

std::string Config::get_str(const std::string& key) const {
  const std::string* v = find(key);
  if (!v) throw InvalidInput("config: missing required key '" + key + "'");
  return *v;
}

std::string Config::get_str(const std::string& key, const std::string& dflt) const {
  const std::string* v = find(key);
  return v ? *v : dflt;
}

double parse_number(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(t, &pos);
  } catch (const std::exception&) {
    throw InvalidInput("config: key '" + what + "': expected a number, got '" + text + "'");
  }
  if (pos != t.size())
    throw InvalidInput("config: key '" + what + "': expected a number, got '" + text + "'");
  return v;
}

cplx parse_complex(const std::string& text, const std::string& what) {
  // Accepts "a", "bi", "a+bi", "a-bi", "i", "-i".
  std::string t;
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) t += c;
  if (t.empty()) throw InvalidInput("config: key '" + what + "': empty complex value");
  auto bad = [&]() -> InvalidInput {
    return InvalidInput("config: key '" + what + "': expected a complex number, got '" + text +
                        "'");
  };
  // Split at the last +/- that is not an exponent sign and not leading.
  size_t cut = std::string::npos;
  for (size_t i = t.size(); i-- > 1;) {
    if ((t[i] == '+' || t[i] == '-') && t[i - 1] != 'e' && t[i - 1] != 'E') {
      cut = i;
      break;
    }
  }
  auto num = [&](std::string s) -> double {
    if (s.empty() || s == "+") return 1.0;
    if (s == "-") return -1.0;
    size_t pos = 0;
    double v = 0;
    try {
      v = std::stod(s, &pos);
    } catch (const std::exception&) {
      throw bad();
    }
    if (pos != s.size()) throw bad();
    return v;
  };
  if (t.back() == 'i' || t.back() == 'I') {
    t.pop_back();
    if (cut == std::string::npos) return cplx(0.0, num(t));
    return cplx(num(t.substr(0, cut)), num(t.substr(cut)));
  }
  if (cut != std::string::npos) throw bad();
  return cplx(num(t), 0.0);
}

std::vector<double> parse_number_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  for (const std::string& item : split_list(text)) {
    if (item.empty()) throw InvalidInput("config: key '" + what + "': empty list entry");
    out.push_back(parse_number(item, what));
  }
  if (out.empty()) throw InvalidInput("config: key '" + what + "': empty list");
  return out;
}

double Config::get_num(const std::string& key) const { return parse_number(get_str(key), key); }

double Config::get_num(const std::string& key, double dflt) const {
  const std::string* v = find(key);
  return v ? parse_number(*v, key) : dflt;
}

long long Config::get_int(const std::string& key) const {
  double v = get_num(key);
  long long n = static_cast<long long>(v);
  if (double(n) != v)
    throw InvalidInput("config: key '" + key + "': expected an integer, got '" + get_str(key) +
                       "'");
  return n;
}

long long Config::get_int(const std::string& key, long long dflt) const {
  return has(key) ? get_int(key) : dflt;
}

bool Config::get_bool(const std::string& key, bool dflt) const {
  const std::string* v = find(key);
  if (!v) return dflt;
  std::string t = trim(*v);
  for (char& c : t) c = char(std::tolower(static_cast<unsigned char>(c)));
  if (t == "true" || t == "yes" || t == "on" || t == "1") return true;
  if (t == "false" || t == "no" || t == "off" || t == "0") return false;
  throw InvalidInput("config: key '" + key + "': expected a boolean, got '" + *v + "'");
}

cplx Config::get_cplx(const std::string& key, cplx dflt) const {
  const std::string* v = find(key);
  return v ? parse_complex(*v, key) : dflt;
}

std::vector<double> Config::get_list(const std::string& key) const {
  return parse_number_list(get_str(key), key);
}

std::vector<cplx> Config::get_cplx_list(const std::string& key) const {
  std::vector<cplx> out;
  for (const std::string& item : split_list(get_str(key))) {
    if (item.empty()) throw InvalidInput("config: key '" + key + "': empty list entry");
    out.push_back(parse_complex(item, key));
  }
  if (out.empty()) throw InvalidInput("config: key '" + key + "': empty list");
  return out;
}

void Config::set(const std::string& key, const std::string& value) {
  for (auto& kv : items)
    if (kv.first == key) {
      kv.second = value;
      return;
    }
  items.emplace_back(key, value);
  if (!used_.empty()) used_.resize(items.size(), 1);  // injected keys are not schema-checked
}

void Config::mark_used(const std::string& key) const {
  if (used_.size() != items.size()) used_.resize(items.size(), 0);
  for (size_t i = 0; i < items.size(); ++i)
    if (items[i].first == key) used_[i] = 1;
}

std::vector<std::string> Config::unused() const {
  std::vector<std::string> out;
  if (used_.size() != items.size()) used_.resize(items.size(), 0);
  for (size_t i = 0; i < items.size(); ++i)
    if (!used_[i]) out.push_back(items[i].first);
  return out;
}

Config load_config(const std::string& path) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(path, tree);
  } catch (const pt::ini_parser_error& e) {
    throw InvalidInput(std::string("config: ") + e.what());
  }
  Config out;
  for (const auto& top : tree) {
    if (top.second.empty()) {
      out.items.emplace_back(top.first, top.second.data());
    } else {
      for (const auto& kv : top.second) {
        if (!kv.second.empty())
          throw InvalidInput("config: key '" + top.first + "." + kv.first +
                             "' nests deeper than section.key");
        out.items.emplace_back(top.first + "." + kv.first, kv.second.data());
      }
    }
  }
  for (size_t i = 0; i < out.items.size(); ++i)
    for (size_t j = i + 1; j < out.items.size(); ++j)
      if (out.items[i].first == out.items[j].first)
        throw InvalidInput("config: duplicate key '" + out.items[i].first + "'");
  return out;
}

void save_config(const std::string& path, const Config& cfg) {
  std::string text;
  std::vector<std::string> order;  // sections in first-appearance order
  for (const auto& kv : cfg.items) {
    size_t dot = kv.first.rfind('.');
    std::string sec = dot == std::string::npos ? std::string() : kv.first.substr(0, dot);
    bool seen = false;
    for (const auto& s : order) seen = seen || s == sec;
    if (!seen) order.push_back(sec);
  }
  for (const auto& sec : order) {
    if (!sec.empty()) text += "[" + sec + "]\n";
    for (const auto& kv : cfg.items) {
      size_t dot = kv.first.rfind('.');
      std::string s = dot == std::string::npos ? std::string() : kv.first.substr(0, dot);
      if (s != sec) continue;
      std::string key = dot == std::string::npos ? kv.first : kv.first.substr(dot + 1);
      text += key + " = " + kv.second + "\n";
    }
  }
  write_text_file(path, text);
}

namespace {

struct BinWriter {
  FILE* f;
  explicit BinWriter(const std::string& path) : f(std::fopen(path.c_str(), "wb")) {
    if (!f) throw InvalidInput("cannot open '" + path + "' for writing");
  }
  ~BinWriter() {
    if (f) std::fclose(f);
  }
  void raw(const void* p, size_t n) {
    if (std::fwrite(p, 1, n, f) != n) throw InvalidInput("short write to field file");
  }
  void u32(uint32_t v) { raw(&v, 4); }
  void u64(uint64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }
};

struct BinReader {
  FILE* f;
  std::string path;
  explicit BinReader(const std::string& p) : f(std::fopen(p.c_str(), "rb")), path(p) {
    if (!f) throw InvalidInput("cannot open '" + p + "' for reading");
  }
  ~BinReader() {
    if (f) std::fclose(f);
  }
  void raw(void* p, size_t n) {
    if (std::fread(p, 1, n, f) != n)
      throw InvalidInput("truncated or corrupt field file '" + path + "'");
  }
  uint32_t u32() {
    uint32_t v;
    raw(&v, 4);
    return v;
  }
  uint64_t u64() {
    uint64_t v;
    raw(&v, 8);
    return v;
  }
  double f64() {
    double v;
    raw(&v, 8);
    return v;
  }
};

void write_domain(BinWriter& w, const BaseDomain& d) {
  w.u32(d.is_torus() ? 0u : 1u);
  w.u32(uint32_t(d.nx));
  w.u32(uint32_t(d.ny));
  if (d.is_torus()) {
    w.f64(d.px);
    w.f64(d.py);
  } else {
    w.f64(d.radius);
    w.f64(d.boundary_value);
  }
  w.u32(uint32_t(d.punctures.size()));
  for (const Puncture& p : d.punctures) {
    w.f64(p.pos.real());
    w.f64(p.pos.imag());
    w.f64(p.exclusion);
  }
}

DomainPtr read_domain(BinReader& r) {
  uint32_t kind = r.u32();
  if (kind > 1) throw InvalidInput("corrupt field file '" + r.path + "': bad domain kind");
  int nx = int(r.u32()), ny = int(r.u32());
  double a = r.f64(), b = r.f64();
  uint32_t np = r.u32();
  if (np > 1u << 20) throw InvalidInput("corrupt field file '" + r.path + "': puncture count");
  std::vector<Puncture> punct(np);
  for (auto& p : punct) {
    double re = r.f64(), im = r.f64();
    p.pos = cplx(re, im);
    p.exclusion = r.f64();
  }
  if (kind == 0) return BaseDomain::torus(nx, ny, a, b, std::move(punct));
  if (nx != ny) throw InvalidInput("corrupt field file '" + r.path + "': disk grid not square");
  return BaseDomain::disk(nx, a, b, std::move(punct));
}

constexpr char kFieldMagic[4] = {'G', 'K', 'F', '1'};
constexpr char kCkptMagic[4] = {'G', 'K', 'C', '1'};

void write_payload(BinWriter& w, const DomainPtr& dom, const Array& v, const Mask& m,
                   const Array* quad) {
  write_domain(w, *dom);
  w.u32(quad ? 1u : 0u);
  w.raw(m.data(), m.size());
  w.raw(v.data(), sizeof(double) * size_t(v.size()));
  if (quad) w.raw(quad->data(), sizeof(double) * size_t(quad->size()));
}

void read_payload(BinReader& r, DomainPtr* dom, Array* v, Mask* m, bool* has_quad, Array* quad) {
  *dom = read_domain(r);
  const size_t n = size_t((*dom)->size());
  uint32_t q = r.u32();
  if (q > 1) throw InvalidInput("corrupt field file '" + r.path + "': payload flag");
  m->resize(n);
  r.raw(m->data(), n);
  for (uint8_t b : *m)
    if (b > 1) throw InvalidInput("corrupt field file '" + r.path + "': mask byte");
  v->resize(Eigen::Index(n));
  r.raw(v->data(), sizeof(double) * n);
  *has_quad = q == 1;
  if (q == 1) {
    quad->resize(Eigen::Index(n));
    r.raw(quad->data(), sizeof(double) * n);
  }
}

void check_magic(BinReader& r, const char expect[4]) {
  char m[4];
  r.raw(m, 4);
  if (std::memcmp(m, expect, 4) != 0)
    throw InvalidInput("'" + r.path + "' is not a recognized binary file");
}

void atomic_rename(const std::string& tmp, const std::string& path) {
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw InvalidInput("cannot move '" + tmp + "' into place");
}

}  // namespace

void write_field_bin(const std::string& path, const ScalarField& f) {
  if (!f.dom) throw InvalidInput("cannot serialize an empty field");
  const std::string tmp = path + ".tmp";
  {
    BinWriter w(tmp);
    w.raw(kFieldMagic, 4);
    w.u32(0);  // scalar payload
    write_payload(w, f.dom, f.v, f.mask, nullptr);
  }
  atomic_rename(tmp, path);
}

ScalarField read_field_bin(const std::string& path) {
  BinReader r(path);
  check_magic(r, kFieldMagic);
  if (r.u32() != 0) throw InvalidInput("'" + path + "' holds a form, not a scalar field");
  DomainPtr dom;
  Array v, quad;
  Mask m;
  bool has_quad = false;
  read_payload(r, &dom, &v, &m, &has_quad, &quad);
  if (has_quad) throw InvalidInput("'" + path + "' carries quadrature on a scalar field");
  return ScalarField(dom, std::move(v), std::move(m));
}

void write_form_bin(const std::string& path, const BaseForm& f) {
  if (!f.dom) throw InvalidInput("cannot serialize an empty form");
  const std::string tmp = path + ".tmp";
  {
    BinWriter w(tmp);
    w.raw(kFieldMagic, 4);
    w.u32(1);  // form payload
    write_payload(w, f.dom, f.density, f.mask, f.quad.get());
  }
  atomic_rename(tmp, path);
}

BaseForm read_form_bin(const std::string& path) {
  BinReader r(path);
  check_magic(r, kFieldMagic);
  if (r.u32() != 1) throw InvalidInput("'" + path + "' holds a scalar field, not a form");
  DomainPtr dom;
  Array v, quad;
  Mask m;
  bool has_quad = false;
  read_payload(r, &dom, &v, &m, &has_quad, &quad);
  BaseForm out(dom, std::move(v), std::move(m));
  if (has_quad) out.quad = std::make_shared<const Array>(std::move(quad));
  return out;
}

namespace {

void write_grid_csv(const std::string& path, const DomainPtr& dom, const Array& v, const Mask& m,
                    const char* value_name) {
  std::string text = csv_row({"i", "j", "x", "y", "valid", value_name});
  for (int j = 0; j < dom->ny; ++j)
    for (int i = 0; i < dom->nx; ++i) {
      const int k = dom->idx(i, j);
      text += csv_row({fmt_int(i), fmt_int(j), fmt17(dom->x(i)), fmt17(dom->y(j)),
                       fmt_int(m[k] ? 1 : 0), fmt17(m[k] ? v[k] : 0.0)});
    }
  write_text_file(path, text);
}

}  // namespace

void write_field_csv(const std::string& path, const ScalarField& f) {
  if (!f.dom) throw InvalidInput("cannot serialize an empty field");
  write_grid_csv(path, f.dom, f.v, f.mask, "value");
}

void write_form_csv(const std::string& path, const BaseForm& f) {
  if (!f.dom) throw InvalidInput("cannot serialize an empty form");
  write_grid_csv(path, f.dom, f.density, f.mask, "density");
}

void write_matrix_csv(const std::string& path, const Matrix& m,
                      const std::vector<std::string>& col_names) {
  std::string text;
  if (!col_names.empty()) {
    if (Eigen::Index(col_names.size()) != m.cols())
      throw InvalidInput("matrix csv: header width does not match the matrix");
    text += csv_row(col_names);
  }
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<std::string> cells;
    cells.reserve(size_t(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) cells.push_back(fmt17(m(r, c)));
    text += csv_row(cells);
  }
  write_text_file(path, text);
}

namespace {

void write_record(BinWriter& w, const StepRecord& r) {
  w.f64(r.t);
  w.f64(r.u);
  w.u32(uint32_t(r.newton_iters));
  w.f64(r.newton_residual);
  w.f64(r.identity_residual);
  w.f64(r.margin);
  w.f64(r.phi_sup);
  w.f64(r.phi_osc);
  w.f64(r.trace_chi_max);
  w.f64(r.weighted_trace_max);
  w.f64(r.band_lo);
  w.f64(r.band_hi);
  w.f64(r.rescaled_gap);
  w.f64(r.g_dev);
  w.f64(r.du_psi);
  w.f64(r.lemma_decay);
  w.f64(r.trace_decay);
  w.f64(r.gke_gap);
  w.f64(r.fiber_diam);
}

StepRecord read_record(BinReader& r) {
  StepRecord out;
  out.t = r.f64();
  out.u = r.f64();
  out.newton_iters = int(r.u32());
  out.newton_residual = r.f64();
  out.identity_residual = r.f64();
  out.margin = r.f64();
  out.phi_sup = r.f64();
  out.phi_osc = r.f64();
  out.trace_chi_max = r.f64();
  out.weighted_trace_max = r.f64();
  out.band_lo = r.f64();
  out.band_hi = r.f64();
  out.rescaled_gap = r.f64();
  out.g_dev = r.f64();
  out.du_psi = r.f64();
  out.lemma_decay = r.f64();
  out.trace_decay = r.f64();
  out.gke_gap = r.f64();
  out.fiber_diam = r.f64();
  return out;
}

}  // namespace

void write_checkpoint(const std::string& path, const StepCheckpoint& c) {
  if (!c.phi.dom) throw InvalidInput("cannot checkpoint an empty potential");
  const std::string tmp = path + ".tmp";
  {
    BinWriter w(tmp);
    w.raw(kCkptMagic, 4);
    w.u64(c.spec_hash);
    w.u32(c.index);
    write_record(w, c.record);
    write_payload(w, c.phi.dom, c.phi.v, c.phi.mask, nullptr);
    w.u32(c.psi.dom ? 1u : 0u);
    if (c.psi.dom) write_payload(w, c.psi.dom, c.psi.v, c.psi.mask, nullptr);
  }
  atomic_rename(tmp, path);
}

StepCheckpoint read_checkpoint(const std::string& path) {
  BinReader r(path);
  check_magic(r, kCkptMagic);
  StepCheckpoint out;
  out.spec_hash = r.u64();
  out.index = r.u32();
  out.record = read_record(r);
  DomainPtr dom;
  Array v, quad;
  Mask m;
  bool has_quad = false;
  read_payload(r, &dom, &v, &m, &has_quad, &quad);
  out.phi = ScalarField(dom, std::move(v), std::move(m));
  if (r.u32() == 1) {
    read_payload(r, &dom, &v, &m, &has_quad, &quad);
    out.psi = ScalarField(dom, std::move(v), std::move(m));
  }
  return out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw InvalidInput("short write to '" + path + "'");
}

}  // namespace gkelab
