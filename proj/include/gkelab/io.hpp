#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gkelab/continuity.hpp"

namespace gkelab {

// Deterministic number formatting shared by every text artifact: %.17g round
// trips doubles exactly, so identical values always produce identical bytes.
std::string fmt17(double v);
std::string fmt_int(long long v);
std::string csv_row(const std::vector<std::string>& cells);

// Ordered key-value configuration with [section] tables; keys are stored as
// dotted paths (section.key). Reads mark keys as consumed so a schema pass
// can name every unknown key after parsing.
struct Config {
  std::vector<std::pair<std::string, std::string>> items;

  const std::string* find(const std::string& key) const;
  bool has(const std::string& key) const { return find(key) != nullptr; }

  // Typed getters; the no-default forms throw InvalidInput naming the key.
  std::string get_str(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& dflt) const;
  double get_num(const std::string& key) const;
  double get_num(const std::string& key, double dflt) const;
  long long get_int(const std::string& key) const;
  long long get_int(const std::string& key, long long dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;
  cplx get_cplx(const std::string& key, cplx dflt) const;
  std::vector<double> get_list(const std::string& key) const;
  std::vector<cplx> get_cplx_list(const std::string& key) const;

  // Replaces the value in place, or appends a new key at the end.
  void set(const std::string& key, const std::string& value);

  void mark_used(const std::string& key) const;
  std::vector<std::string> unused() const;

 private:
  mutable std::vector<uint8_t> used_;
};

// Number parsing shared with CLI overrides.
double parse_number(const std::string& text, const std::string& what);
cplx parse_complex(const std::string& text, const std::string& what);
std::vector<double> parse_number_list(const std::string& text, const std::string& what);

Config load_config(const std::string& path);
// Groups dotted keys back into [section] tables, in first-appearance order.
void save_config(const std::string& path, const Config& cfg);

// Flat binary field container: magic "GKF1", domain descriptor, validity
// mask, then little-endian doubles row-major. Forms append their optional
// quadrature table.
void write_field_bin(const std::string& path, const ScalarField& f);
ScalarField read_field_bin(const std::string& path);
void write_form_bin(const std::string& path, const BaseForm& f);
BaseForm read_form_bin(const std::string& path);

// Inspection CSV: i,j,x,y,valid,value.
void write_field_csv(const std::string& path, const ScalarField& f);
void write_form_csv(const std::string& path, const BaseForm& f);

void write_matrix_csv(const std::string& path, const Matrix& m,
                      const std::vector<std::string>& col_names = {});

// One continuity state: configuration hash, schedule index, the diagnostics
// row, and the potentials needed to warm-start the next step exactly.
struct StepCheckpoint {
  uint64_t spec_hash = 0;
  uint32_t index = 0;
  StepRecord record;
  ScalarField phi;
  ScalarField psi;  // empty when the rescaled track is off
};

// Checkpoints are written to a temporary name and renamed, so a crash never
// leaves a truncated file behind.
void write_checkpoint(const std::string& path, const StepCheckpoint& c);
StepCheckpoint read_checkpoint(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace gkelab
