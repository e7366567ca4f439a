#pragma once

#include <map>
#include <sstream>

#include "rflab/harness.hpp"

namespace rflab {

// ---------------------------------------------------------------------------
// Minimal TOML subset: [section] / [section.sub] headers, key = value pairs,
// values: string, bool, integer, float, arrays (nestable, may span lines),
// inline tables {k = v, ...}. Comments start with '#'.

namespace toml {

struct Value {
  enum class Type { boolean, integer, real, string, array, table };
  Type type = Type::table;
  bool b = false;
  std::int64_t i = 0;
  double d = 0.0;
  std::string s;
  std::vector<Value> arr;
  std::map<std::string, Value> tab;

  bool as_bool() const {
    if (type != Type::boolean) throw config_error("expected boolean");
    return b;
  }
  std::int64_t as_int() const {
    if (type != Type::integer) throw config_error("expected integer");
    return i;
  }
  double as_real() const {
    if (type == Type::integer) return static_cast<double>(i);
    if (type != Type::real) throw config_error("expected number");
    return d;
  }
  const std::string& as_string() const {
    if (type != Type::string) throw config_error("expected string");
    return s;
  }
  const std::vector<Value>& as_array() const {
    if (type != Type::array) throw config_error("expected array");
    return arr;
  }
};

class Parser {
 public:
  explicit Parser(std::string text) : t_(std::move(text)) {}

  Value parse() {
    Value root;
    Value* current = &root;
    while (!eof()) {
      skip_ws_comments();
      if (eof()) break;
      if (peek() == '[') {
        get();
        std::string name = parse_key_dotted(']');
        expect(']');
        current = &root;
        std::stringstream ss(name);
        std::string part;
        while (std::getline(ss, part, '.')) current = &current->tab[trim(part)];
        current->type = Value::Type::table;
      } else {
        std::string key = parse_key_dotted('=');
        expect('=');
        skip_ws_inline();
        current->tab[trim(key)] = parse_value();
      }
      skip_to_eol();
    }
    return root;
  }

 private:
  bool eof() const { return pos_ >= t_.size(); }
  char peek() const { return t_[pos_]; }
  char get() { return t_[pos_++]; }
  void expect(char c) {
    skip_ws_inline();
    if (eof() || get() != c) throw config_error(std::string("config parse: expected '") + c + "'");
  }
  static std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t");
    std::size_t b = s.find_last_not_of(" \t");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
  }
  void skip_ws_inline() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) get();
  }
  void skip_ws_comments() {
    while (!eof()) {
      const char c = peek();
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        get();
      } else if (c == '#') {
        while (!eof() && get() != '\n') {
        }
      } else {
        break;
      }
    }
  }
  void skip_to_eol() {
    skip_ws_inline();
    if (!eof() && peek() == '#')
      while (!eof() && peek() != '\n') get();
    if (!eof() && (peek() == '\n' || peek() == '\r')) return;
    if (!eof() && peek() != '\n' && peek() != '\r')
      throw config_error("config parse: trailing characters on line");
  }
  std::string parse_key_dotted(char stop) {
    std::string out;
    while (!eof() && peek() != stop && peek() != '\n') out += get();
    if (eof() || peek() == '\n') throw config_error("config parse: unterminated key");
    return out;
  }

  Value parse_value() {
    skip_ws_multiline();
    if (eof()) throw config_error("config parse: missing value");
    const char c = peek();
    if (c == '"') return parse_string();
    if (c == '[') return parse_array();
    if (c == '{') return parse_inline_table();
    return parse_scalar();
  }
  void skip_ws_multiline() {
    while (!eof()) {
      const char c = peek();
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        get();
      } else if (c == '#') {
        while (!eof() && get() != '\n') {
        }
      } else {
        break;
      }
    }
  }
  Value parse_string() {
    get();  // opening quote
    Value v;
    v.type = Value::Type::string;
    while (!eof() && peek() != '"') v.s += get();
    if (eof()) throw config_error("config parse: unterminated string");
    get();
    return v;
  }
  Value parse_array() {
    get();  // '['
    Value v;
    v.type = Value::Type::array;
    while (true) {
      skip_ws_multiline();
      if (eof()) throw config_error("config parse: unterminated array");
      if (peek() == ']') {
        get();
        break;
      }
      v.arr.push_back(parse_value());
      skip_ws_multiline();
      if (!eof() && peek() == ',') get();
    }
    return v;
  }
  Value parse_inline_table() {
    get();  // '{'
    Value v;
    v.type = Value::Type::table;
    while (true) {
      skip_ws_multiline();
      if (eof()) throw config_error("config parse: unterminated inline table");
      if (peek() == '}') {
        get();
        break;
      }
      std::string key;
      while (!eof() && peek() != '=' && peek() != '}') key += get();
      expect('=');
      skip_ws_inline();
      v.tab[trim(key)] = parse_value();
      skip_ws_multiline();
      if (!eof() && peek() == ',') get();
    }
    return v;
  }
  Value parse_scalar() {
    std::string tok;
    while (!eof() && peek() != '\n' && peek() != ',' && peek() != ']' && peek() != '}' &&
           peek() != '#' && peek() != '\r')
      tok += get();
    tok = trim(tok);
    Value v;
    if (tok == "true" || tok == "false") {
      v.type = Value::Type::boolean;
      v.b = tok == "true";
      return v;
    }
    if (tok.find_first_of(".eE") == std::string::npos ||
        (tok.size() > 1 && (tok.find_first_of(".eE", 1) == std::string::npos && tok[0] != '-'))) {
      // try integer first
      try {
        std::size_t used = 0;
        const long long i = std::stoll(tok, &used);
        if (used == tok.size()) {
          v.type = Value::Type::integer;
          v.i = i;
          return v;
        }
      } catch (...) {
      }
    }
    try {
      std::size_t used = 0;
      const double d = std::stod(tok, &used);
      if (used == tok.size()) {
        v.type = Value::Type::real;
        v.d = d;
        return v;
      }
    } catch (...) {
    }
    throw config_error("config parse: cannot parse value '" + tok + "'");
  }

  std::string t_;
  std::size_t pos_ = 0;
};

inline Value parse(const std::string& text) { return Parser(text).parse(); }

}  // namespace toml

// ---------------------------------------------------------------------------
// Experiment configuration.

struct GeneratorSpec {
  std::string kind = "flat";  // flat | conformal | warped | perturbed
  std::vector<WaveMode> modes;
  std::array<double, 3> h_entries{1.0, 0.0, 1.0};
  // perturbed:
  std::string base_kind = "flat";
  std::vector<WaveMode> base_modes;
  std::array<double, 3> base_h_entries{1.0, 0.0, 1.0};
  std::uint64_t seed = 1;
  double amplitude = 0.0;
  int mode_cutoff = 4;
};

struct SpectralParams {
  double K = 1.0;
  std::vector<double> rays{0.0, 1.0471975511965976, -1.0471975511965976, 2.356194490192345,
                           -2.356194490192345};
  int radii_per_decade = 5;
  int decades = 4;
  std::string norm_kind = "l2";
  bool restrict_half_plane = true;
  int eigenvalue_count = 8;
  std::string contour_shape = "sector_boundary";
  int contour_nodes = 192;
  double contour_theta = 2.356194490192345;
  double semigroup_t = 0.1;
};

struct ExperimentConfig {
  std::string experiment = "flow";  // flow|spectrum|resolvent|depend|stability|ball
  std::vector<int> resolution{32, 32};
  std::vector<double> periods{1.0, 1.0};
  GeneratorSpec generator;
  StepControl control;
  std::string rhs_kind = "ricci";
  HolderParams holder;
  int norm_k = 2;
  SpectralParams spectral;
  // depend
  std::vector<double> epsilons{1e-2, 1e-3, 1e-4};
  double tau = 0.5;
  int n_ratio_times = 20;
  // stability
  int n_samples = 10;
  double sample_amplitude = 1e-3;
  double flat_tol = 1e-6;
  // ball
  int n_directions = 5;
  double max_radius = 1.0;
  double elliptic_margin = 0.1;
  std::uint64_t seed = 1;
  std::string lie_term_convention = "standard";
  std::string output_dir = ".";
  int threads = 0;  // 0 = library default

  GridSpec grid() const { return GridSpec(resolution, periods); }
  LieConvention convention() const {
    if (lie_term_convention == "standard") return LieConvention::standard;
    if (lie_term_convention == "paper") return LieConvention::paper;
    throw config_error("lie_term_convention must be 'standard' or 'paper'");
  }
  RhsKind kind() const {
    if (rhs_kind == "ricci") return RhsKind::ricci;
    if (rhs_kind == "deturck") return RhsKind::deturck;
    if (rhs_kind == "normalized") return RhsKind::normalized;
    throw config_error("rhs_kind must be ricci|deturck|normalized");
  }
};

namespace detail {

inline std::vector<WaveMode> parse_modes(const toml::Value& arr) {
  std::vector<WaveMode> out;
  for (const auto& v : arr.as_array()) {
    WaveMode m;
    const auto& t = v.tab;
    auto it = t.find("wave");
    if (it != t.end()) {
      const auto& w = it->second.as_array();
      for (std::size_t a = 0; a < w.size() && a < kMaxDim; ++a)
        m.wave[a] = static_cast<int>(w[a].as_int());
    }
    if (t.count("amplitude")) m.amplitude = t.at("amplitude").as_real();
    if (t.count("phase")) m.phase = t.at("phase").as_real();
    out.push_back(m);
  }
  return out;
}

inline void load_generator(const toml::Value& tab, GeneratorSpec* g) {
  const auto& t = tab.tab;
  if (t.count("kind")) g->kind = t.at("kind").as_string();
  if (t.count("modes")) g->modes = parse_modes(t.at("modes"));
  if (t.count("h_entries")) {
    const auto& h = t.at("h_entries").as_array();
    for (std::size_t i = 0; i < 3 && i < h.size(); ++i) g->h_entries[i] = h[i].as_real();
  }
  if (t.count("seed")) g->seed = static_cast<std::uint64_t>(t.at("seed").as_int());
  if (t.count("amplitude")) g->amplitude = t.at("amplitude").as_real();
  if (t.count("mode_cutoff")) g->mode_cutoff = static_cast<int>(t.at("mode_cutoff").as_int());
  if (t.count("base")) {
    const auto& b = t.at("base").tab;
    if (b.count("kind")) g->base_kind = b.at("kind").as_string();
    if (b.count("modes")) g->base_modes = parse_modes(b.at("modes"));
    if (b.count("h_entries")) {
      const auto& h = b.at("h_entries").as_array();
      for (std::size_t i = 0; i < 3 && i < h.size(); ++i) g->base_h_entries[i] = h[i].as_real();
    }
  }
}

}  // namespace detail

inline ExperimentConfig config_from_toml(const std::string& text) {
  ExperimentConfig cfg;
  toml::Value root = toml::parse(text);
  const auto& t = root.tab;
  if (t.count("experiment")) cfg.experiment = t.at("experiment").as_string();
  if (t.count("seed")) cfg.seed = static_cast<std::uint64_t>(t.at("seed").as_int());
  if (t.count("lie_term_convention"))
    cfg.lie_term_convention = t.at("lie_term_convention").as_string();
  if (t.count("output_dir")) cfg.output_dir = t.at("output_dir").as_string();
  if (t.count("threads")) cfg.threads = static_cast<int>(t.at("threads").as_int());

  if (t.count("grid")) {
    const auto& g = t.at("grid").tab;
    if (g.count("resolution")) {
      cfg.resolution.clear();
      for (const auto& v : g.at("resolution").as_array())
        cfg.resolution.push_back(static_cast<int>(v.as_int()));
    }
    if (g.count("periods")) {
      cfg.periods.clear();
      for (const auto& v : g.at("periods").as_array()) cfg.periods.push_back(v.as_real());
    }
    if (cfg.periods.size() != cfg.resolution.size())
      cfg.periods.assign(cfg.resolution.size(), 1.0);
  }
  if (t.count("generator")) detail::load_generator(t.at("generator"), &cfg.generator);
  if (t.count("control")) {
    const auto& c = t.at("control").tab;
    auto real = [&](const char* k, double* out) {
      if (c.count(k)) *out = c.at(k).as_real();
    };
    real("dt_init", &cfg.control.dt_init);
    real("dt_min", &cfg.control.dt_min);
    real("safety", &cfg.control.safety);
    real("cfl_c", &cfg.control.cfl_c);
    real("curvature_cap", &cfg.control.curvature_cap);
    real("eig_floor", &cfg.control.eig_floor);
    real("t_end", &cfg.control.t_end);
    real("conv_tol", &cfg.control.conv_tol);
    if (c.count("snapshot_every"))
      cfg.control.snapshot_every = static_cast<int>(c.at("snapshot_every").as_int());
    if (c.count("conv_checks")) cfg.control.conv_checks = static_cast<int>(c.at("conv_checks").as_int());
    if (c.count("gauge_substeps"))
      cfg.control.gauge_substeps = static_cast<int>(c.at("gauge_substeps").as_int());
    if (c.count("rhs_kind")) cfg.rhs_kind = c.at("rhs_kind").as_string();
  }
  if (t.count("norms")) {
    const auto& n = t.at("norms").tab;
    if (n.count("alpha")) cfg.holder.alpha = n.at("alpha").as_real();
    if (n.count("min_sep")) cfg.holder.min_sep = n.at("min_sep").as_real();
    if (n.count("max_sep")) cfg.holder.max_sep = n.at("max_sep").as_real();
    if (n.count("sample_pairs"))
      cfg.holder.sample_pairs = static_cast<int>(n.at("sample_pairs").as_int());
    if (n.count("seed")) cfg.holder.seed = static_cast<std::uint64_t>(n.at("seed").as_int());
    if (n.count("k")) cfg.norm_k = static_cast<int>(n.at("k").as_int());
  }
  if (t.count("spectral")) {
    const auto& s = t.at("spectral").tab;
    if (s.count("K")) cfg.spectral.K = s.at("K").as_real();
    if (s.count("rays")) {
      cfg.spectral.rays.clear();
      for (const auto& v : s.at("rays").as_array()) cfg.spectral.rays.push_back(v.as_real());
    }
    if (s.count("radii_per_decade"))
      cfg.spectral.radii_per_decade = static_cast<int>(s.at("radii_per_decade").as_int());
    if (s.count("decades")) cfg.spectral.decades = static_cast<int>(s.at("decades").as_int());
    if (s.count("norm_kind")) cfg.spectral.norm_kind = s.at("norm_kind").as_string();
    if (s.count("restrict_half_plane"))
      cfg.spectral.restrict_half_plane = s.at("restrict_half_plane").as_bool();
    if (s.count("eigenvalue_count"))
      cfg.spectral.eigenvalue_count = static_cast<int>(s.at("eigenvalue_count").as_int());
    if (s.count("contour_shape")) cfg.spectral.contour_shape = s.at("contour_shape").as_string();
    if (s.count("contour_nodes"))
      cfg.spectral.contour_nodes = static_cast<int>(s.at("contour_nodes").as_int());
    if (s.count("contour_theta")) cfg.spectral.contour_theta = s.at("contour_theta").as_real();
    if (s.count("semigroup_t")) cfg.spectral.semigroup_t = s.at("semigroup_t").as_real();
  }
  if (t.count("depend")) {
    const auto& d = t.at("depend").tab;
    if (d.count("epsilons")) {
      cfg.epsilons.clear();
      for (const auto& v : d.at("epsilons").as_array()) cfg.epsilons.push_back(v.as_real());
    }
    if (d.count("tau")) cfg.tau = d.at("tau").as_real();
    if (d.count("n_ratio_times")) cfg.n_ratio_times = static_cast<int>(d.at("n_ratio_times").as_int());
  }
  if (t.count("stability")) {
    const auto& s = t.at("stability").tab;
    if (s.count("n_samples")) cfg.n_samples = static_cast<int>(s.at("n_samples").as_int());
    if (s.count("amplitude")) cfg.sample_amplitude = s.at("amplitude").as_real();
    if (s.count("flat_tol")) cfg.flat_tol = s.at("flat_tol").as_real();
  }
  if (t.count("ball")) {
    const auto& b = t.at("ball").tab;
    if (b.count("n_directions")) cfg.n_directions = static_cast<int>(b.at("n_directions").as_int());
    if (b.count("max_radius")) cfg.max_radius = b.at("max_radius").as_real();
    if (b.count("elliptic_margin")) cfg.elliptic_margin = b.at("elliptic_margin").as_real();
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw config_error("cannot open config file: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return config_from_toml(ss.str());
}

/// Build the generator's metric on the config grid.
inline MetricField build_generator(const GridSpec& grid, const GeneratorSpec& gen,
                                   const HolderParams& hp) {
  auto base_of = [&](const std::string& kind, const std::vector<WaveMode>& modes,
                     const std::array<double, 3>& h) -> MetricField {
    if (kind == "flat") return MetricField::flat(grid);
    if (kind == "conformal") return gen_conformal(grid, modes);
    if (kind == "warped") return gen_warped_product(grid, modes, h);
    throw config_error("unknown generator kind: " + kind);
  };
  if (gen.kind == "perturbed") {
    MetricField base = base_of(gen.base_kind, gen.base_modes, gen.base_h_entries);
    return gen_perturbation(base, gen.seed, gen.amplitude, gen.mode_cutoff, hp);
  }
  return base_of(gen.kind, gen.modes, gen.h_entries);
}

/// Default configuration rendered as TOML (the `defaults` subcommand).
inline std::string default_config_toml() {
  std::ostringstream os;
  os << "# rflab experiment configuration (defaults)\n"
     << "experiment = \"flow\"   # flow | spectrum | resolvent | depend | stability | ball\n"
     << "seed = 1\n"
     << "lie_term_convention = \"standard\"   # standard: -2Rc + L_W g; paper: -2Rc - 2 L_W g\n"
     << "output_dir = \".\"\n"
     << "threads = 0              # 0 = use OMP default\n\n"
     << "[grid]\n"
     << "resolution = [32, 32]\n"
     << "periods = [1.0, 1.0]\n\n"
     << "[generator]\n"
     << "kind = \"conformal\"      # flat | conformal | warped | perturbed\n"
     << "modes = [{wave = [1, 0], amplitude = 0.05, phase = 0.0}]\n"
     << "h_entries = [1.0, 0.0, 1.0]   # warped: constant SPD 2x2, packed\n"
     << "seed = 1                 # perturbed\n"
     << "amplitude = 0.001        # perturbed\n"
     << "mode_cutoff = 4          # perturbed (must be <= min resolution / 4)\n"
     << "# [generator.base]       # base generator when kind = \"perturbed\"\n"
     << "# kind = \"warped\"\n"
     << "# modes = [{wave = [1, 0], amplitude = 0.3, phase = 0.0}]\n\n"
     << "[control]\n"
     << "rhs_kind = \"ricci\"      # ricci | deturck | normalized\n"
     << "dt_init = 0.01\n"
     << "dt_min = 1e-12\n"
     << "safety = 0.9\n"
     << "cfl_c = 1.0              # dt <= safety*min(h^2)/(cfl_c*dim*|g^-1|*(1+|Rm|))\n"
     << "curvature_cap = 1e6\n"
     << "eig_floor = 1e-8\n"
     << "t_end = 1.0\n"
     << "snapshot_every = 50\n"
     << "conv_tol = 1e-9\n"
     << "conv_checks = 3\n"
     << "gauge_substeps = 1\n\n"
     << "[norms]\n"
     << "alpha = 0.5\n"
     << "min_sep = 0.0            # 0 = one grid spacing\n"
     << "max_sep = 0.0            # 0 = quarter of the smallest period\n"
     << "sample_pairs = 200000\n"
     << "seed = 12345\n"
     << "k = 2\n\n"
     << "[spectral]\n"
     << "K = 1.0\n"
     << "rays = [0.0, 1.0471975511965976, -1.0471975511965976, 2.356194490192345, "
        "-2.356194490192345]\n"
     << "radii_per_decade = 5\n"
     << "decades = 4\n"
     << "norm_kind = \"l2\"        # l2 | sup\n"
     << "restrict_half_plane = true\n"
     << "eigenvalue_count = 8\n"
     << "contour_shape = \"sector_boundary\"   # sector_boundary | circle\n"
     << "contour_nodes = 192\n"
     << "contour_theta = 2.356194490192345     # 3*pi/4\n"
     << "semigroup_t = 0.1\n\n"
     << "[depend]\n"
     << "epsilons = [0.01, 0.001, 0.0001]\n"
     << "tau = 0.5\n"
     << "n_ratio_times = 20\n\n"
     << "[stability]\n"
     << "n_samples = 10\n"
     << "amplitude = 0.001\n"
     << "flat_tol = 1e-6\n\n"
     << "[ball]\n"
     << "n_directions = 5\n"
     << "max_radius = 1.0\n"
     << "elliptic_margin = 0.1\n";
  return os.str();
}

}  // namespace rflab
