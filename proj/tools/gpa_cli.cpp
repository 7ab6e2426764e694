// Copyright 2026 The GPA Authors
// SPDX-License-Identifier: Apache-2.0

// gpa: benchmark, error, gradient-check and visualization front end.
// Exit codes: 0 success, 1 check failure, 2 usage or input error.

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "gpa/gpa.hpp"

namespace {

using namespace gpa;

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kUsage = 2;

struct CheckFailure {
  std::string message;
};

// ---------------------------------------------------------------------------
// Shared flag groups

struct ConfigFlags {
  std::size_t d = 1;
  std::string m = "1x1";
  std::size_t kappa = 1;
  bool scaled = false;
  std::string preset;
  std::string config_path;
  CLI::Option* d_opt = nullptr;
  CLI::Option* m_opt = nullptr;
  CLI::Option* kappa_opt = nullptr;

  void add(CLI::App& app, bool kappa_flag = true) {
    d_opt = app.add_option("--d", d, "downsampling factor")->capture_default_str();
    m_opt = app.add_option("--m", m, "partition grid MHxMW (or a square count)")->capture_default_str();
    if (kappa_flag) kappa_opt = app.add_option("--kappa", kappa, "relevant low-res keys per cell")->capture_default_str();
    app.add_flag("--scaled", scaled, "scale logits by 1/sqrt(c_k)");
    auto* p = app.add_option("--preset", preset, "named configuration: pivot or highres");
    auto* c = app.add_option("--config", config_path, "key=value configuration file");
    p->excludes(c);
    for (auto* o : {d_opt, m_opt, kappa_opt}) {
      if (!o) continue;
      p->excludes(o);
      c->excludes(o);
    }
  }

  /// nullopt: the preset asks for full attention at this size.
  std::optional<GpaConfig> resolve(std::size_t h, std::size_t w) const {
    if (!preset.empty()) return resolve_preset(preset, h, w);
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw ConfigError("cannot open config file '" + config_path + "'");
      std::stringstream ss;
      ss << in.rdbuf();
      GpaConfig cfg = parse_config(ss.str());
      if (scaled) cfg.scaled = true;
      return cfg;
    }
    const GridShape g = parse_grid(m);
    return GpaConfig{d, g.rows, g.cols, kappa, scaled};
  }
};

/// GPA with d = 1, one cell and every key selected is exactly full attention.
GpaConfig exact_config(std::size_t h, std::size_t w, bool scaled) { return {1, 1, 1, h * w, scaled}; }

struct InputFlags {
  std::string q, k, v;
  std::string synthetic;
  std::size_t c_k = 4;
  std::size_t c_v = 3;
  double corr = 4.0;
  std::uint64_t seed = 0;

  void add(CLI::App& app, bool need_v) {
    auto* qo = app.add_option("--q", q, "query tensor file");
    auto* ko = app.add_option("--k", k, "key tensor file");
    auto* vo = app.add_option("--v", v, need_v ? "value tensor file" : "value tensor file (optional)");
    auto* so = app.add_option("--synthetic", synthetic, "generate smooth inputs of size N or HxW");
    so->excludes(qo)->excludes(ko)->excludes(vo);
    app.add_option("--ck", c_k, "synthetic key/query channels")->capture_default_str();
    app.add_option("--cv", c_v, "synthetic value channels")->capture_default_str();
    app.add_option("--corr", corr, "synthetic correlation length")->capture_default_str();
    app.add_option("--seed", seed, "synthetic seed")->capture_default_str();
  }
};

bench::Size2 parse_size(const std::string& text) {
  if (text.find('x') == std::string::npos) {
    const GridShape g = parse_grid(text + "x" + text);
    return {g.rows, g.cols};
  }
  const GridShape g = parse_grid(text);
  return {g.rows, g.cols};
}

template <Real T>
struct Inputs {
  ImageTensor<T> q, k;
  std::optional<ImageTensor<T>> v;
  std::string descriptor;
};

struct LoadedFiles {
  io::RawTensor q, k;
  std::optional<io::RawTensor> v;
};

std::variant<Inputs<float>, Inputs<double>> load_inputs(const InputFlags& f, bool need_v) {
  if (!f.synthetic.empty()) {
    const auto size = parse_size(f.synthetic);
    bench::SweepOptions opt;
    opt.c_k = f.c_k;
    opt.c_v = f.c_v;
    opt.correlation_length = f.corr;
    auto [q, k, v] = bench::synthetic_inputs<double>(opt, size, f.seed);
    std::ostringstream d;
    d << "synthetic " << size.h << "x" << size.w << " c_k=" << f.c_k << " c_v=" << f.c_v
      << " corr=" << f.corr << " seed=" << f.seed;
    return Inputs<double>{std::move(q), std::move(k), std::move(v), d.str()};
  }
  if (f.q.empty() || f.k.empty() || (need_v && f.v.empty())) {
    throw ConfigError(need_v ? "inputs: give --q, --k and --v, or --synthetic"
                             : "inputs: give --q and --k (and optionally --v), or --synthetic");
  }
  LoadedFiles raw{io::load_raw(f.q), io::load_raw(f.k), std::nullopt};
  if (!f.v.empty()) raw.v = io::load_raw(f.v);
  if (raw.q.dtype != raw.k.dtype || (raw.v && raw.v->dtype != raw.q.dtype)) {
    throw FormatError("input tensors must share one dtype");
  }
  const std::string desc = "files q=" + f.q + " k=" + f.k + (f.v.empty() ? "" : " v=" + f.v);
  auto convert = [&]<Real T>(T) {
    Inputs<T> in{io::to_image_tensor<T>(raw.q), io::to_image_tensor<T>(raw.k), std::nullopt, desc};
    if (raw.v) in.v = io::to_image_tensor<T>(*raw.v);
    return in;
  };
  if (raw.q.dtype == io::DType::f32) return convert(0.0f);
  return convert(0.0);
}

/// Opens --out style destinations; "-" or empty means stdout.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path, std::ios::binary | std::ios::trunc);
      if (!file_) throw FormatError("cannot open '" + path + "' for writing");
    }
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }
  void close() {
    if (file_.is_open()) {
      file_.close();
      if (!file_) throw FormatError("failed writing output file");
    }
  }

 private:
  std::ofstream file_;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  return std::string(s.substr(b, s.find_last_not_of(" \t") - b + 1));
}

std::string grouped(std::uint64_t v) {
  std::string s = std::to_string(v);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

// ---------------------------------------------------------------------------
// gen

struct GenFlags {
  std::size_t c = 1, h = 0, w = 0;
  double corr = 4.0;
  std::uint64_t seed = 0;
  std::string out;
  std::string dtype = "f64";
};

int run_gen(const GenFlags& f) {
  if (f.c == 0 || f.h == 0 || f.w == 0) throw ShapeError("--c, --h and --w must be positive");
  if (f.dtype == "f32") {
    io::save_tensor(f.out, bench::generate_smooth_tensor<float>(f.c, f.h, f.w, f.corr, f.seed));
  } else if (f.dtype == "f64") {
    io::save_tensor(f.out, bench::generate_smooth_tensor<double>(f.c, f.h, f.w, f.corr, f.seed));
  } else {
    throw ConfigError("--dtype must be f32 or f64");
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// bench

struct BenchFlags {
  InputFlags in;
  ConfigFlags cfg;
  std::string csv;
  bool timing = false;
  bool sweep = false;
  std::size_t seeds = 1;
};

std::string bench_csv_header(bool timing) {
  std::string h =
      "name,h,w,c_k,c_v,d,m_h,m_w,kappa,phase1_affinity_elems,phase2_affinity_elems,"
      "gathered_key_elems,gathered_value_elems,phase1_macs,phase2_macs,predicted_peak_elems,"
      "measured_peak_elems,measured_phase1_peak_elems,measured_phase2_peak_elems";
  if (timing) h += ",phase1_ms,phase2_ms";
  return h;
}

template <Real T>
int run_bench_on(const Inputs<T>& in, const BenchFlags& f) {
  const auto& q = in.q;
  const auto& k = in.k;
  const auto& v = *in.v;
  const std::size_t h = q.height(), w = q.width();
  const auto resolved = f.cfg.resolve(h, w);
  const bool full = !resolved.has_value();
  const GpaConfig cfg = full ? exact_config(h, w, f.cfg.scaled) : *resolved;
  validate(cfg, h, w);

  const auto report = bench::measure_cost(q, k, v, cfg);
  const auto& p = report.predicted;
  const std::string name = full ? "full_attention" : config_name(cfg, h, w);

  // The baseline is only run where its affinity fits comfortably.
  std::optional<std::uint64_t> full_measured;
  if (q.pixels() <= bench::kOracleLimit) {
    full_measured = measure_peak_elements([&] { (void)full_attention(q, k, v, cfg.scaled); });
  }

  std::ostream& os = std::cout;
  os << "input: " << in.descriptor << "\n";
  os << "config: " << name << " d=" << cfg.d << " m=" << format_grid({cfg.m_h, cfg.m_w})
     << " kappa=" << cfg.kappa << " scaled=" << (cfg.scaled ? "true" : "false") << "\n";
  os << "dictionary_size: " << cfg.kappa * cfg.d * cfg.d << "\n\n";
  os << std::left << std::setw(28) << "quantity" << std::right << std::setw(20) << "predicted"
     << std::setw(20) << "measured" << "\n";
  auto row = [&](const std::string& label, std::uint64_t pred, std::optional<std::uint64_t> meas) {
    os << std::left << std::setw(28) << label << std::right << std::setw(20) << grouped(pred)
       << std::setw(20) << (meas ? grouped(*meas) : std::string("-")) << "\n";
  };
  row("phase1_affinity_elems", p.phase1_affinity_elems, std::nullopt);
  row("phase2_affinity_elems", p.phase2_affinity_elems, std::nullopt);
  row("gathered_key_elems", p.gathered_key_elems, std::nullopt);
  row("gathered_value_elems", p.gathered_value_elems, std::nullopt);
  row("phase1_macs", p.phase1_macs, std::nullopt);
  row("phase2_macs", p.phase2_macs, std::nullopt);
  row("phase1_peak_elems", p.phase1_live_elems(), report.measured_phase1_peak_elems);
  row("phase2_peak_elems", p.phase2_live_elems(), report.measured_phase2_peak_elems);
  row("peak_elems", p.predicted_peak_elems(), report.measured_peak_elems);
  os << "peak_ratio (measured/predicted): " << std::fixed << std::setprecision(4) << report.peak_ratio()
     << std::defaultfloat << "\n\n";
  os << "baseline full attention\n";
  row("full_affinity_elems", p.full_affinity_elems, std::nullopt);
  row("full_macs", p.full_macs, std::nullopt);
  row("full_peak_elems", p.full_peak_elems, full_measured);
  if (!full_measured) os << "(baseline not run above " << bench::kOracleLimit << " queries)\n";
  os << "full/gpa peak ratio: " << std::fixed << std::setprecision(2)
     << static_cast<double>(p.full_peak_elems) / static_cast<double>(std::max<std::uint64_t>(1, p.predicted_peak_elems()))
     << std::defaultfloat << "\n";
  if (f.timing) {
    os << std::fixed << std::setprecision(3) << "phase1_ms: " << report.phase1_ms << "\nphase2_ms: " << report.phase2_ms
       << std::defaultfloat << "\n";
  }

  if (!f.csv.empty()) {
    Output out(f.csv);
    auto& c = out.stream();
    c << bench_csv_header(f.timing) << "\n";
    c << name << ',' << h << ',' << w << ',' << q.channels() << ',' << v.channels() << ',' << cfg.d << ','
      << cfg.m_h << ',' << cfg.m_w << ',' << cfg.kappa << ',' << p.phase1_affinity_elems << ','
      << p.phase2_affinity_elems << ',' << p.gathered_key_elems << ',' << p.gathered_value_elems << ','
      << p.phase1_macs << ',' << p.phase2_macs << ',' << p.predicted_peak_elems() << ','
      << report.measured_peak_elems << ',' << report.measured_phase1_peak_elems << ','
      << report.measured_phase2_peak_elems;
    if (f.timing) c << std::fixed << std::setprecision(3) << ',' << report.phase1_ms << ',' << report.phase2_ms;
    c << "\n";
    c << "full_attention_baseline," << h << ',' << w << ',' << q.channels() << ',' << v.channels()
      << ",,,,,," << p.full_affinity_elems << ",,,," << p.full_macs << ',' << p.full_peak_elems << ','
      << (full_measured ? std::to_string(*full_measured) : std::string()) << ",,";
    if (f.timing) c << ",,";
    c << "\n";
    out.close();
  }
  return kOk;
}

int run_bench_sweep(const BenchFlags& f) {
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 0; s < f.seeds; ++s) seeds.push_back(f.in.seed + s);
  bench::SweepOptions opt;
  opt.c_k = f.in.c_k;
  opt.c_v = f.in.c_v;
  opt.correlation_length = f.in.corr;
  opt.with_error = false;
  const auto rows = bench::sweep<double>(bench::default_sweep_configs(), bench::default_sweep_sizes(), seeds, opt);

  bool within = true;
  std::cout << std::left << std::setw(20) << "config" << std::setw(10) << "size" << std::setw(6) << "seed"
            << std::right << std::setw(16) << "predicted_peak" << std::setw(16) << "measured_peak" << std::setw(8)
            << "ratio" << "\n";
  for (const auto& r : rows) {
    std::cout << std::left << std::setw(20) << r.name << std::setw(10)
              << (std::to_string(r.size.h) + "x" + std::to_string(r.size.w)) << std::setw(6) << r.seed << std::right;
    if (r.cost) {
      const double ratio = r.cost->peak_ratio();
      within = within && ratio <= 2.0 && ratio >= 0.5;
      std::cout << std::setw(16) << r.cost->predicted.predicted_peak_elems() << std::setw(16)
                << r.cost->measured_peak_elems << std::setw(8) << std::fixed << std::setprecision(3) << ratio
                << std::defaultfloat << "\n";
    } else {
      within = false;
      std::cout << "  " << r.status << "\n";
    }
  }
  if (!f.csv.empty()) {
    Output out(f.csv);
    bench::write_sweep_csv(out.stream(), rows, f.timing);
    out.close();
  }
  if (!within) throw CheckFailure{"measured peak outside 2x of predicted for some sweep row"};
  return kOk;
}

int run_bench(const BenchFlags& f) {
  if (f.sweep) return run_bench_sweep(f);
  auto inputs = load_inputs(f.in, true);
  return std::visit([&](const auto& in) { return run_bench_on(in, f); }, inputs);
}

// ---------------------------------------------------------------------------
// error

struct ErrorFlags {
  std::string size = "64x64";
  std::size_t d = 2;
  std::string m = "32x32";
  std::string kappas = "1,2,4,12";
  bool scaled = false;
  std::size_t seeds = 20;
  std::uint64_t first_seed = 0;
  std::size_t c_k = 4, c_v = 3;
  double corr = 4.0;
  std::string csv;
};

std::vector<std::size_t> parse_kappas(const std::string& text, std::size_t exact) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto t = trim(item);
    if (t == "exact") {
      out.push_back(exact);
      continue;
    }
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(t, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (t.empty() || pos != t.size() || t[0] == '-') throw ConfigError("bad kappa list entry '" + t + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw ConfigError("--kappa list is empty");
  return out;
}

int run_error(const ErrorFlags& f) {
  const auto size = parse_size(f.size);
  if (size.h * size.w > bench::kOracleLimit) {
    throw ConfigError("oracle infeasible: error runs are limited to " + std::to_string(bench::kOracleLimit) +
                      " pixels (64x64), got " + f.size);
  }
  const GridShape grid = parse_grid(f.m);
  if (f.d == 0 || size.h % f.d || size.w % f.d) {
    throw DivisibilityError("size " + f.size + " is not divisible by d=" + std::to_string(f.d));
  }
  const auto kappas = parse_kappas(f.kappas, (size.h / f.d) * (size.w / f.d));
  std::vector<GpaConfig> configs;
  for (auto kappa : kappas) {
    configs.push_back({f.d, grid.rows, grid.cols, kappa, f.scaled});
    validate(configs.back(), size.h, size.w);
  }

  bench::SweepOptions opt;
  opt.c_k = f.c_k;
  opt.c_v = f.c_v;
  opt.correlation_length = f.corr;

  Output out(f.csv);
  std::ostream& csv = out.stream();
  csv << "config,h,w,seed,d,m_h,m_w,kappa,l1_error,l2_error,max_abs_error\n";
  std::vector<std::array<double, 3>> mean(configs.size(), {0.0, 0.0, 0.0});
  for (std::size_t s = 0; s < f.seeds; ++s) {
    const std::uint64_t seed = f.first_seed + s;
    const auto [q, k, v] = bench::synthetic_inputs<double>(opt, size, seed);
    const auto exact = full_attention(q, k, v, f.scaled);
    for (std::size_t i = 0; i < configs.size(); ++i) {
      const auto& cfg = configs[i];
      const auto r = bench::compare(gpa_forward(q, k, v, cfg).output, exact);
      std::ostringstream line;
      line << config_name(cfg, size.h, size.w) << ',' << size.h << ',' << size.w << ',' << seed << ',' << cfg.d
           << ',' << cfg.m_h << ',' << cfg.m_w << ',' << cfg.kappa << ',' << std::setprecision(17) << r.l1 << ','
           << r.l2 << ',' << r.max_abs;
      csv << line.str() << '\n';
      mean[i][0] += r.l1 / static_cast<double>(f.seeds);
      mean[i][1] += r.l2 / static_cast<double>(f.seeds);
      mean[i][2] += r.max_abs / static_cast<double>(f.seeds);
    }
  }
  out.close();

  // With the CSV on stdout, the summary goes to stderr to keep the CSV clean.
  std::ostream& summary = (f.csv.empty() || f.csv == "-") ? std::cerr : std::cout;
  summary << std::left << std::setw(20) << "config" << std::right << std::setw(16) << "mean_l1" << std::setw(16)
          << "mean_l2" << std::setw(16) << "mean_max_abs" << "\n";
  for (std::size_t i = 0; i < configs.size(); ++i) {
    summary << std::left << std::setw(20) << config_name(configs[i], size.h, size.w) << std::right
            << std::scientific << std::setprecision(6) << std::setw(16) << mean[i][0] << std::setw(16) << mean[i][1]
            << std::setw(16) << mean[i][2] << std::defaultfloat << "\n";
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradFlags {
  std::string which = "full";
  std::string shape = "2x3x3";
  double step = 1e-5;
  double floor = 1e-6;
  std::optional<double> threshold;
  ConfigFlags cfg;
  std::uint64_t seed = 0;
  bool zero_cotangent = false;
  std::string csv;
};

GradCheckShape parse_shape(const std::string& text) {
  std::vector<std::size_t> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, 'x')) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (item.empty() || pos != item.size() || v == 0 || item[0] == '-') {
      throw ConfigError("--shape must be CxHxW or CKxCVxHxW with positive entries, got '" + text + "'");
    }
    parts.push_back(static_cast<std::size_t>(v));
  }
  if (parts.size() == 3) return {parts[0], parts[0], parts[1], parts[2]};
  if (parts.size() == 4) return {parts[0], parts[1], parts[2], parts[3]};
  throw ConfigError("--shape must be CxHxW or CKxCVxHxW, got '" + text + "'");
}

int run_gradcheck(const GradFlags& f) {
  GradTarget which{};
  if (f.which == "full") which = GradTarget::full;
  else if (f.which == "gpa") which = GradTarget::gpa;
  else throw ConfigError("--which must be full or gpa");
  const auto shape = parse_shape(f.shape);
  const auto resolved = f.cfg.resolve(shape.h, shape.w);
  GpaConfig cfg = resolved ? *resolved : exact_config(shape.h, shape.w, f.cfg.scaled);
  if (which == GradTarget::full) cfg.scaled = f.cfg.scaled || cfg.scaled;
  else validate(cfg, shape.h, shape.w);

  GradCheckOptions opt;
  opt.step = f.step;
  opt.relative_floor = f.floor;
  opt.seed = f.seed;
  opt.zero_cotangent = f.zero_cotangent;
  const auto report = finite_diff_check(which, shape, cfg, opt);
  const double threshold = f.threshold.value_or(default_threshold(which));

  std::cout << "shape: c_k=" << shape.c_k << " c_v=" << shape.c_v << " h=" << shape.h << " w=" << shape.w << "\n";
  if (which == GradTarget::gpa) {
    std::cout << "config: " << config_name(cfg, shape.h, shape.w) << " d=" << cfg.d
              << " m=" << format_grid({cfg.m_h, cfg.m_w}) << " kappa=" << cfg.kappa << "\n";
    // Compare the frozen-selection gradients with full attention on the same
    // inputs; they agree exactly when every key is selected.
    Rng rng(opt.seed);
    const auto q = random_tensor<double>(shape.c_k, shape.h, shape.w, rng);
    const auto k = random_tensor<double>(shape.c_k, shape.h, shape.w, rng);
    const auto v = random_tensor<double>(shape.c_v, shape.h, shape.w, rng);
    auto g = random_tensor<double>(shape.c_v, shape.h, shape.w, rng);
    if (opt.zero_cotangent) std::fill(g.data().begin(), g.data().end(), 0.0);
    const auto sets = find_relevant_keys(q, k, cfg);
    const auto a = gpa_vjp(q, k, v, cfg, sets, g);
    const auto b = full_attention_vjp(q, k, v, g, cfg.scaled);
    double diff = 0.0, scale = 0.0;
    for (auto pair : {std::pair{&a.q, &b.q}, std::pair{&a.k, &b.k}, std::pair{&a.v, &b.v}}) {
      for (std::size_t i = 0; i < pair.first->size(); ++i) {
        diff = std::max(diff, std::abs(pair.first->data()[i] - pair.second->data()[i]));
        scale = std::max(scale, std::abs(pair.second->data()[i]));
      }
    }
    std::cout << "gpa_vs_full_max_rel_diff: " << std::scientific << std::setprecision(6)
              << (scale > 0 ? diff / scale : diff) << std::defaultfloat << "\n";
  }
  std::cout << summary_text(report, threshold);
  if (!f.csv.empty()) {
    Output out(f.csv);
    write_csv(out.stream(), report);
    out.close();
  }
  return report.max_rel_error < threshold ? kOk : kCheckFailed;
}

// ---------------------------------------------------------------------------
// viz

struct VizFlags {
  InputFlags in;
  ConfigFlags cfg;
  std::string positions;
  std::size_t top = 10;
  std::string format = "csv";
  std::string out;
};

std::vector<Coord> parse_positions(const std::string& text) {
  std::vector<Coord> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    const auto comma = item.find(',');
    bool ok = comma != std::string::npos;
    std::size_t r = 0, c = 0;
    if (ok) {
      try {
        std::size_t p1 = 0, p2 = 0;
        const std::string a = trim(item.substr(0, comma)), b = trim(item.substr(comma + 1));
        r = std::stoul(a, &p1);
        c = std::stoul(b, &p2);
        ok = p1 == a.size() && p2 == b.size() && a[0] != '-' && b[0] != '-';
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (!ok) throw ConfigError("bad query position '" + item + "'; expected row,col");
    out.push_back({r, c});
  }
  if (out.empty()) throw ConfigError("--positions is empty");
  return out;
}

template <Real T>
int run_viz_on(const Inputs<T>& in, const VizFlags& f) {
  const std::size_t h = in.q.height(), w = in.q.width();
  const auto resolved = f.cfg.resolve(h, w);
  const GpaConfig cfg = resolved ? *resolved : exact_config(h, w, f.cfg.scaled);
  const auto positions = parse_positions(f.positions);
  if (f.format != "csv" && f.format != "json") throw ConfigError("--format must be csv or json");
  if (f.top == 0) throw ConfigError("--top must be positive");

  const RelevantKeySets sets =
      in.v ? gpa_forward(in.q, in.k, *in.v, cfg).sets : find_relevant_keys(in.q, in.k, cfg);
  const auto records = viz::extract(in.q, in.k, sets, positions, f.top, cfg.scaled);

  Output out(f.out);
  if (f.format == "csv") {
    viz::write_csv(out.stream(), records);
  } else {
    out.stream() << viz::to_json(records).dump(2) << "\n";
  }
  out.close();
  return kOk;
}

int run_viz(const VizFlags& f) {
  auto inputs = load_inputs(f.in, false);
  return std::visit([&](const auto& in) { return run_viz_on(in, f); }, inputs);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grid partitioned attention: benchmarks, error sweeps, gradient checks, visualization"};
  app.require_subcommand(1);
  app.set_help_flag("--help", "show help");
  app.set_help_all_flag("--help-all", "show help for every command");

  GenFlags gen;
  auto* gen_cmd = app.add_subcommand("gen", "write a smooth random tensor file");
  gen_cmd->add_option("--c", gen.c, "channels")->capture_default_str();
  gen_cmd->add_option("--h", gen.h, "height")->required();
  gen_cmd->add_option("--w", gen.w, "width")->required();
  gen_cmd->add_option("--corr", gen.corr, "correlation length (0 = white noise)")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "output path")->required();
  gen_cmd->add_option("--dtype", gen.dtype, "f32 or f64")->capture_default_str();

  BenchFlags bench_flags;
  auto* bench_cmd = app.add_subcommand("bench", "predicted vs measured cost of one pass");
  bench_flags.in.add(*bench_cmd, true);
  bench_flags.cfg.add(*bench_cmd);
  bench_cmd->add_option("--csv", bench_flags.csv, "write rows as CSV to this path ('-' for stdout)");
  bench_cmd->add_flag("--timing", bench_flags.timing, "include wall-clock columns (not deterministic)");
  bench_cmd->add_flag("--sweep", bench_flags.sweep, "run the default config x size sweep instead");
  bench_cmd->add_option("--seeds", bench_flags.seeds, "seeds per sweep row")->capture_default_str();

  ErrorFlags err;
  auto* err_cmd = app.add_subcommand("error", "approximation error against full attention");
  err_cmd->add_option("--size", err.size, "HxW, at most 64x64")->capture_default_str();
  err_cmd->add_option("--d", err.d, "downsampling factor")->capture_default_str();
  err_cmd->add_option("--m", err.m, "partition grid MHxMW")->capture_default_str();
  err_cmd->add_option("--kappa", err.kappas, "comma-separated kappa list; 'exact' = all keys")->capture_default_str();
  err_cmd->add_flag("--scaled", err.scaled, "scale logits by 1/sqrt(c_k)");
  err_cmd->add_option("--seeds", err.seeds, "number of seeds")->capture_default_str();
  err_cmd->add_option("--seed", err.first_seed, "first seed")->capture_default_str();
  err_cmd->add_option("--ck", err.c_k, "key/query channels")->capture_default_str();
  err_cmd->add_option("--cv", err.c_v, "value channels")->capture_default_str();
  err_cmd->add_option("--corr", err.corr, "correlation length")->capture_default_str();
  err_cmd->add_option("--csv", err.csv, "CSV path (default stdout)");

  GradFlags grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of the analytic gradients");
  grad_cmd->add_option("--which", grad.which, "full or gpa")->capture_default_str();
  grad_cmd->add_option("--shape", grad.shape, "CxHxW or CKxCVxHxW")->capture_default_str();
  grad_cmd->add_option("--step", grad.step, "central difference step")->capture_default_str();
  grad_cmd->add_option("--floor", grad.floor, "relative error floor (fraction of max gradient)")->capture_default_str();
  grad_cmd->add_option("--threshold", grad.threshold, "max relative error (default 1e-6 full, 1e-5 gpa)");
  grad.cfg.add(*grad_cmd);
  grad_cmd->add_option("--seed", grad.seed, "seed for inputs and cotangent")->capture_default_str();
  grad_cmd->add_flag("--zero-cotangent", grad.zero_cotangent, "use a zero output cotangent");
  grad_cmd->add_option("--csv", grad.csv, "per-coordinate CSV path ('-' for stdout)");

  VizFlags vz;
  auto* viz_cmd = app.add_subcommand("viz", "per-query key weights for plotting");
  vz.in.add(*viz_cmd, false);
  vz.cfg.add(*viz_cmd);
  viz_cmd->add_option("--positions", vz.positions, "query positions 'r,c;r,c'")->required();
  viz_cmd->add_option("--top", vz.top, "keys per query")->capture_default_str();
  viz_cmd->add_option("--format", vz.format, "csv or json")->capture_default_str();
  viz_cmd->add_option("--out", vz.out, "output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    (void)app.exit(e);
    return kUsage;
  }

  try {
    if (*gen_cmd) return run_gen(gen);
    if (*bench_cmd) return run_bench(bench_flags);
    if (*err_cmd) return run_error(err);
    if (*grad_cmd) return run_gradcheck(grad);
    if (*viz_cmd) return run_viz(vz);
  } catch (const CheckFailure& e) {
    std::cerr << "check failed: " << e.message << "\n";
    return kCheckFailed;
  } catch (const gpa::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
