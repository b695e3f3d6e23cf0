#include "memcell/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>

namespace memcell {

using nlohmann::json;
namespace fs = std::filesystem;

// ------------------------------------------------------------ json helpers

static const json& need(const json& j, const char* key, const char* ctx) {
  auto it = j.find(key);
  if (it == j.end())
    throw PipelineError(2, std::string("config: missing ") + ctx + "." + key);
  return *it;
}

static double need_num(const json& j, const char* key, const char* ctx) {
  const json& v = need(j, key, ctx);
  if (!v.is_number()) throw PipelineError(2, std::string("config: ") + ctx + "." + key + " must be a number");
  return v.get<double>();
}

static double num_or(const json& j, const char* key, double dflt, const char* ctx) {
  if (!j.contains(key)) return dflt;
  const json& v = j.at(key);
  if (!v.is_number()) throw PipelineError(2, std::string("config: ") + ctx + "." + key + " must be a number");
  return v.get<double>();
}

static int int_or(const json& j, const char* key, int dflt, const char* ctx) {
  if (!j.contains(key)) return dflt;
  const json& v = j.at(key);
  if (!v.is_number_integer()) throw PipelineError(2, std::string("config: ") + ctx + "." + key + " must be an integer");
  return v.get<int>();
}

static bool bool_or(const json& j, const char* key, bool dflt, const char* ctx) {
  if (!j.contains(key)) return dflt;
  const json& v = j.at(key);
  if (!v.is_boolean()) throw PipelineError(2, std::string("config: ") + ctx + "." + key + " must be a boolean");
  return v.get<bool>();
}

static Vec3 get_vec3(const json& v, const char* ctx) {
  if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() || !v[2].is_number())
    throw PipelineError(2, std::string("config: ") + ctx + " must be an array of three numbers");
  return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

static Expr get_expr(const json& v, const char* ctx) {
  if (!v.is_string()) throw PipelineError(2, std::string("config: ") + ctx + " must be an expression string");
  try {
    return Expr(v.get<std::string>());
  } catch (const std::exception& e) {
    throw PipelineError(2, std::string("config: ") + ctx + ": " + e.what());
  }
}

static VecExpr get_vecexpr(const json& v, const char* ctx) {
  if (!v.is_array() || v.size() != 3)
    throw PipelineError(2, std::string("config: ") + ctx + " must be an array of three expression strings");
  VecExpr out;
  for (int c = 0; c < 3; ++c) out.c[c] = get_expr(v[(std::size_t)c], ctx);
  return out;
}

static ElasticTensor get_tensor(const json& t, const char* ctx) {
  try {
    if (t.contains("mandel")) {
      const json& m = t.at("mandel");
      if (!m.is_array() || m.size() != 36)
        throw PipelineError(2, std::string("config: ") + ctx + ".mandel must hold 36 numbers");
      std::array<double, 36> c{};
      for (int i = 0; i < 36; ++i) c[(std::size_t)i] = m[(std::size_t)i].get<double>();
      return ElasticTensor::from_mandel(c);
    }
    return ElasticTensor::isotropic(need_num(t, "lambda", ctx), need_num(t, "mu", ctx));
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError(2, std::string("config: ") + ctx + ": " + e.what());
  }
}

static json j_vec3(Vec3 v) { return json::array({v[0], v[1], v[2]}); }
static Vec3 v3_of(const json& a) {
  return {a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()};
}
static json j_mat3(const Mat3& m) {
  json a = json::array();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) a.push_back(m[i][j]);
  return a;
}
static Mat3 m3_of(const json& a) {
  Mat3 m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m[i][j] = a.at((std::size_t)(3 * i + j)).get<double>();
  return m;
}

// ------------------------------------------------------------ configuration

RunConfig parse_config(const json& j) {
  RunConfig c;
  c.raw = j;

  const json& g = need(j, "geometry", "config");
  std::string shape = need(g, "shape", "geometry").get<std::string>();
  if (shape == "cube")
    c.inclusion.shape = Shape::cube;
  else if (shape == "ball")
    c.inclusion.shape = Shape::ball;
  else if (shape == "none")
    c.inclusion.shape = Shape::none;
  else
    throw PipelineError(2, "config: geometry.shape must be cube, ball, or none");
  if (g.contains("center")) c.inclusion.center = get_vec3(g.at("center"), "geometry.center");
  if (c.inclusion.shape != Shape::none) c.inclusion.size = need_num(g, "size", "geometry");
  c.resolution = int_or(g, "resolution", 32, "geometry");

  if (j.contains("field")) {
    const json& f = j.at("field");
    if (f.contains("components")) {
      c.field.fixed_direction = false;
      c.field.comp = get_vecexpr(f.at("components"), "field.components");
    } else {
      c.field.fixed_direction = true;
      c.field.xi = get_vec3(need(f, "direction", "field"), "field.direction");
      if (std::fabs(norm(c.field.xi) - 1.0) > 1e-12)
        throw PipelineError(2, "config: field.direction must be a unit vector");
      c.field.gamma = get_expr(need(f, "amplitude", "field"), "field.amplitude");
    }
    std::string sup = f.contains("support") ? f.at("support").get<std::string>() : "all";
    if (sup == "inclusion")
      c.field.support_inclusion = true;
    else if (sup != "all")
      throw PipelineError(2, "config: field.support must be \"inclusion\" or \"all\"");
  }

  const json& t = need(j, "tensors", "config");
  c.hard = get_tensor(need(t, "hard", "tensors"), "tensors.hard");
  c.soft = get_tensor(need(t, "soft", "tensors"), "tensors.soft");

  const json& s = need(j, "scenario", "config");
  c.T = need_num(s, "T", "scenario");
  if (c.T <= 0) throw PipelineError(2, "config: scenario.T must be positive");
  if (s.contains("u0")) c.data.u0 = get_vecexpr(s.at("u0"), "scenario.u0");
  if (s.contains("v0")) c.data.v0 = get_vecexpr(s.at("v0"), "scenario.v0");
  if (s.contains("f")) c.data.f = get_vecexpr(s.at("f"), "scenario.f");
  c.data.alpha_dot0 = num_or(s, "alpha_dot0", 0.0, "scenario");
  if (s.contains("eps")) {
    const json& e = s.at("eps");
    if (!e.is_array() || e.empty())
      throw PipelineError(2, "config: scenario.eps must be a non-empty array");
    for (const json& v : e) {
      if (!v.is_number()) throw PipelineError(2, "config: scenario.eps entries must be numbers");
      c.eps.push_back(v.get<double>());
    }
  }

  json d = j.contains("discretization") ? j.at("discretization") : json::object();
  c.modes = int_or(d, "modes", 60, "discretization");
  c.kernel_T = num_or(d, "kernel_T", 0.0, "discretization");
  c.kernel_dt = num_or(d, "kernel_dt", 0.0, "discretization");
  c.macro_n = int_or(d, "macro_n", 32, "discretization");
  c.macro_dt = num_or(d, "macro_dt", 0.0, "discretization");
  c.modes_cap = int_or(d, "modes_cap", -1, "discretization");
  c.macro_periodic = bool_or(d, "macro_periodic", false, "discretization");
  c.vox_per_cell = int_or(d, "vox_per_cell", 0, "discretization");
  c.fine_dt = num_or(d, "fine_dt", 0.0, "discretization");
  c.cfl_safety = num_or(d, "cfl_safety", 0.9, "discretization");

  json o = j.contains("output") ? j.at("output") : json::object();
  c.samples = int_or(o, "samples", 200, "output");
  if (o.contains("snapshots")) {
    const json& sn = o.at("snapshots");
    if (!sn.is_array()) throw PipelineError(2, "config: output.snapshots must be an array of times");
    for (const json& v : sn) {
      if (!v.is_number() || v.get<double>() < 0)
        throw PipelineError(2, "config: output.snapshots entries must be non-negative times");
      c.snapshots.push_back(v.get<double>());
    }
    std::sort(c.snapshots.begin(), c.snapshots.end());
  }

  // resolved defaults and cross-field validation
  if (c.kernel_T <= 0) c.kernel_T = c.T;
  if (c.kernel_dt <= 0) c.kernel_dt = c.kernel_T / 400.0;
  if (c.vox_per_cell <= 0) c.vox_per_cell = c.resolution;
  if (c.modes < 1) throw PipelineError(2, "config: discretization.modes must be at least 1");
  if (c.macro_n < 2) throw PipelineError(2, "config: discretization.macro_n must be at least 2");
  if (c.samples < 1) throw PipelineError(2, "config: output.samples must be at least 1");
  if (c.cfl_safety <= 0 || c.cfl_safety > 1)
    throw PipelineError(2, "config: discretization.cfl_safety must lie in (0, 1]");
  if (c.vox_per_cell < c.resolution || c.vox_per_cell % c.resolution != 0)
    throw PipelineError(2, "config: discretization.vox_per_cell must be a multiple of geometry.resolution");
  for (double e : c.eps) {
    if (e <= 0) throw PipelineError(2, "config: scenario.eps entries must be positive");
    double inv = 1.0 / e;
    if (std::fabs(inv - std::lround(inv)) > 1e-9 * inv)
      throw PipelineError(2, "config: 1/eps must be an integer for every scenario.eps entry");
  }
  return c;
}

RunConfig load_config(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw PipelineError(2, "config: cannot open " + p.string());
  json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw PipelineError(2, "config: " + p.string() + ": " + e.what());
  }
  return parse_config(j);
}

std::uint64_t stage_fingerprint(const RunConfig& cfg, const std::string& stage) {
  json s;
  auto copy = [&](const char* k) {
    if (cfg.raw.contains(k)) s[k] = cfg.raw.at(k);
  };
  auto soft_tensor = [&] {
    if (cfg.raw.contains("tensors") && cfg.raw.at("tensors").contains("soft"))
      s["soft"] = cfg.raw.at("tensors").at("soft");
  };
  if (stage == "cell") {
    copy("geometry");
  } else if (stage == "modes") {
    copy("geometry");
    copy("field");
    soft_tensor();
    s["modes"] = cfg.modes;
  } else if (stage == "correctors") {
    copy("geometry");
    copy("field");
    copy("tensors");
  } else if (stage == "kernel") {
    copy("geometry");
    copy("field");
    soft_tensor();
    s["modes"] = cfg.modes;
    s["kernel_T"] = cfg.kernel_T;
    s["kernel_dt"] = cfg.kernel_dt;
  } else if (stage == "macro") {
    copy("geometry");
    copy("field");
    copy("tensors");
    copy("scenario");
    s["modes"] = cfg.modes;
    s["kernel_T"] = cfg.kernel_T;
    s["kernel_dt"] = cfg.kernel_dt;
    s["macro_n"] = cfg.macro_n;
    s["macro_dt"] = cfg.macro_dt;
    s["modes_cap"] = cfg.modes_cap;
    s["macro_periodic"] = cfg.macro_periodic;
    s["samples"] = cfg.samples;
    s["snapshots"] = cfg.snapshots;
  } else if (stage == "fine") {
    copy("geometry");
    copy("field");
    copy("tensors");
    copy("scenario");
    s["vox_per_cell"] = cfg.vox_per_cell;
    s["fine_dt"] = cfg.fine_dt;
    s["cfl_safety"] = cfg.cfl_safety;
    s["samples"] = cfg.samples;
    s["snapshots"] = cfg.snapshots;
  } else {
    s = cfg.raw;
  }
  s["_stage"] = stage;
  return fnv1a64(s.dump());
}

// ------------------------------------------------------------ artifacts

void ArtifactStore::write_json(const std::string& rel, const json& j) const {
  fs::path p = file(rel);
  fs::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw PipelineError(4, "cannot write artifact " + p.string());
  f << j.dump(2) << "\n";
  if (!f) throw PipelineError(4, "short write on artifact " + p.string());
}

json ArtifactStore::read_json(const std::string& rel, std::uint64_t want_fp,
                              const std::string& producer) const {
  fs::path p = file(rel);
  std::ifstream f(p);
  if (!f)
    throw PipelineError(5, "missing artifact " + rel + "; run the " + producer + " stage first");
  json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw PipelineError(5, "unreadable artifact " + rel + ": " + e.what());
  }
  if (j.value("fingerprint", "") != hex64(want_fp))
    throw PipelineError(5, "stale artifact " + rel +
                               " (produced from a different configuration); rerun the " + producer +
                               " stage");
  return j;
}

template <class F>
static auto as_code(int code, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError(code, e.what());
  }
}

static void write_csv(const fs::path& p, const std::vector<std::string>& cols,
                      const std::vector<std::vector<double>>& rows) {
  fs::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw PipelineError(4, "cannot write " + p.string());
  for (std::size_t i = 0; i < cols.size(); ++i) f << (i ? "," : "") << cols[i];
  f << "\n";
  char buf[40];
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", r[i]);
      f << (i ? "," : "") << buf;
    }
    f << "\n";
  }
  if (!f) throw PipelineError(4, "short write on " + p.string());
}

// ------------------------------------------------------------ context

void build_context(const RunConfig& cfg, ModelContext& out, int modes_override, bool need_modes) {
  out.geom = as_code(3, [&] { return build_geometry(cfg.inclusion, cfg.resolution); });
  out.field = as_code(3, [&] { return sample_field(cfg.field, out.geom); });
  out.op = std::make_unique<PeriodicElasticity>(*cfg.hard, out.geom);
  bool inc = !out.geom.soft_elems.empty();
  if (inc) out.forms = std::make_unique<ConstrainedForms>(*cfg.soft, out.field, out.geom);
  out.cs = as_code(4, [&] { return solve_correctors(*out.op, out.field); });
  out.hc = as_code(4, [&] {
    return homogenized_coefficients(*out.op, out.cs, out.field, out.forms.get());
  });
  if (need_modes && inc) {
    int count = modes_override > 0 ? modes_override : cfg.modes;
    out.modes = as_code(4, [&] {
      return solve_modes(*out.forms, count, stage_fingerprint(cfg, "modes"));
    });
    out.kb = as_code(4, [&] {
      return kernel_series(out.modes, *out.forms, out.field.xi, cfg.kernel_T, cfg.kernel_dt);
    });
  }
}

// ------------------------------------------------------------ stages

static const char* shape_name(Shape s) {
  return s == Shape::cube ? "cube" : s == Shape::ball ? "ball" : "none";
}

json run_cell(const RunConfig& cfg, const ArtifactStore& store) {
  CellGeometry geom = as_code(3, [&] { return build_geometry(cfg.inclusion, cfg.resolution); });
  std::int64_t interior = 0;
  for (std::uint8_t v : geom.node_interior2) interior += v;
  json a;
  a["fingerprint"] = hex64(stage_fingerprint(cfg, "cell"));
  a["resolution"] = cfg.resolution;
  a["shape"] = shape_name(cfg.inclusion.shape);
  a["center"] = j_vec3(cfg.inclusion.center);
  a["size"] = cfg.inclusion.size;
  a["vol1"] = geom.vol1;
  a["vol2"] = geom.vol2;
  a["soft_voxels"] = (std::int64_t)geom.soft_elems.size();
  a["interior_nodes"] = interior;
  store.write_json("cell.json", a);
  json sum;
  sum["stage"] = "cell";
  sum["vol2"] = geom.vol2;
  sum["soft_voxels"] = (std::int64_t)geom.soft_elems.size();
  sum["artifact"] = "cell.json";
  return sum;
}

json run_modes(const RunConfig& cfg, const ArtifactStore& store) {
  store.read_json("cell.json", stage_fingerprint(cfg, "cell"), "cell");
  CellGeometry geom = as_code(3, [&] { return build_geometry(cfg.inclusion, cfg.resolution); });
  if (geom.soft_elems.empty())
    throw PipelineError(3, "modes: the cell has no inclusion");
  SampledField field = as_code(3, [&] { return sample_field(cfg.field, geom); });
  ConstrainedForms forms(*cfg.soft, field, geom);
  std::uint64_t fp = stage_fingerprint(cfg, "modes");
  ModeSet ms = as_code(4, [&] { return solve_modes(forms, cfg.modes, fp); });

  double defect = sum_rule_defect(ms, forms.int_bhat2(), field.xi);
  json m;
  m["fingerprint"] = hex64(fp);
  m["count"] = ms.N;
  m["ndof"] = forms.ndof();
  m["rank"] = field.rank;
  m["mu"] = ms.mu;
  json hb = json::array();
  for (const Vec3& h : ms.hbar) hb.push_back(j_vec3(h));
  m["hbar"] = hb;
  m["int_bhat2"] = forms.int_bhat2();
  m["sum_rule_defect"] = defect;
  store.write_json("modes/modes.json", m);

  std::vector<double> flat;
  flat.reserve((std::size_t)ms.N * (std::size_t)forms.ndof());
  for (const auto& v : ms.s) flat.insert(flat.end(), v.begin(), v.end());
  write_f64(store.file_for_write("modes/s.f64"), flat.data(), flat.size());

  json sum;
  sum["stage"] = "modes";
  sum["count"] = ms.N;
  sum["mu_min"] = ms.mu.empty() ? 0.0 : ms.mu.front();
  sum["mu_max"] = ms.mu.empty() ? 0.0 : ms.mu.back();
  sum["sum_rule_defect"] = defect;
  sum["artifact"] = "modes/modes.json";
  return sum;
}

json run_correctors(const RunConfig& cfg, const ArtifactStore& store) {
  store.read_json("cell.json", stage_fingerprint(cfg, "cell"), "cell");
  CellGeometry geom = as_code(3, [&] { return build_geometry(cfg.inclusion, cfg.resolution); });
  SampledField field = as_code(3, [&] { return sample_field(cfg.field, geom); });
  PeriodicElasticity op(*cfg.hard, geom);
  std::unique_ptr<ConstrainedForms> forms;
  if (!geom.soft_elems.empty())
    forms = std::make_unique<ConstrainedForms>(*cfg.soft, field, geom);
  CorrectorSet cs = as_code(4, [&] { return solve_correctors(op, field); });
  HomogenizedCoefficients hc =
      as_code(4, [&] { return homogenized_coefficients(op, cs, field, forms.get()); });

  std::uint64_t fp = stage_fingerprint(cfg, "correctors");
  {
    std::vector<double> flat;
    for (int J = 0; J < 6; ++J) flat.insert(flat.end(), cs.w[J].begin(), cs.w[J].end());
    write_f64(store.file_for_write("correctors/w.f64"), flat.data(), flat.size());
    flat.clear();
    for (int jj = 0; jj < 3; ++jj)
      flat.insert(flat.end(), cs.theta[jj].begin(), cs.theta[jj].end());
    write_f64(store.file_for_write("correctors/theta.f64"), flat.data(), flat.size());
    json meta;
    meta["fingerprint"] = hex64(fp);
    meta["veclen"] = (std::int64_t)cs.w[0].size();
    store.write_json("correctors/correctors.json", meta);
  }

  json c;
  c["fingerprint"] = hex64(fp);
  c["Mstar"] = hc.Mstar;
  c["mstar"] = hc.mstar;
  c["mstar_dual_dev"] = hc.mstar_dual_dev;
  c["cstar"] = hc.cstar;
  c["lambdastar"] = j_vec3(hc.lambdastar);
  c["mustar"] = j_vec3(hc.mustar);
  c["A1star"] = std::vector<double>(hc.A1star.begin(), hc.A1star.end());
  c["A1dir"] = j_mat3(hc.A1dir);
  c["V1star"] = j_mat3(hc.V1star);
  c["Wstar"] = j_mat3(hc.Wstar);
  c["proj2"] = j_mat3(hc.proj2);
  c["vol1"] = hc.vol1;
  c["vol2"] = hc.vol2;
  c["int_bhat2"] = hc.int_bhat2;
  c["int_bhat"] = j_vec3(forms ? forms->int_bhat() : Vec3{});
  c["xi"] = j_vec3(hc.xi);
  c["fixed_direction"] = hc.fixed_direction;
  c["rank"] = field.rank;
  store.write_json("coeffs.json", c);

  json sum;
  sum["stage"] = "correctors";
  sum["Mstar"] = hc.Mstar;
  sum["cstar"] = hc.cstar;
  sum["mstar_dual_dev"] = hc.mstar_dual_dev;
  sum["lambdastar_norm"] = norm(hc.lambdastar);
  sum["artifact"] = "coeffs.json";
  return sum;
}

static HomogenizedCoefficients hc_from_json(const json& c) {
  HomogenizedCoefficients hc;
  const json& a = c.at("A1star");
  for (int i = 0; i < 36; ++i) hc.A1star[(std::size_t)i] = a.at((std::size_t)i).get<double>();
  hc.A1dir = m3_of(c.at("A1dir"));
  hc.V1star = m3_of(c.at("V1star"));
  hc.Wstar = m3_of(c.at("Wstar"));
  hc.proj2 = m3_of(c.at("proj2"));
  hc.Mstar = c.at("Mstar").get<double>();
  hc.mstar = c.at("mstar").get<double>();
  hc.mstar_dual_dev = c.at("mstar_dual_dev").get<double>();
  hc.cstar = c.at("cstar").get<double>();
  hc.lambdastar = v3_of(c.at("lambdastar"));
  hc.mustar = v3_of(c.at("mustar"));
  hc.vol1 = c.at("vol1").get<double>();
  hc.vol2 = c.at("vol2").get<double>();
  hc.int_bhat2 = c.at("int_bhat2").get<double>();
  hc.xi = v3_of(c.at("xi"));
  hc.fixed_direction = c.at("fixed_direction").get<bool>();
  return hc;
}

json run_kernel(const RunConfig& cfg, const ArtifactStore& store, bool wave_check) {
  std::uint64_t fp_modes = stage_fingerprint(cfg, "modes");
  json mj = store.read_json("modes/modes.json", fp_modes, "modes");

  CellGeometry geom = as_code(3, [&] { return build_geometry(cfg.inclusion, cfg.resolution); });
  if (geom.soft_elems.empty()) throw PipelineError(3, "kernel: the cell has no inclusion");
  SampledField field = as_code(3, [&] { return sample_field(cfg.field, geom); });
  ConstrainedForms forms(*cfg.soft, field, geom);

  ModeSet ms;
  ms.N = mj.at("count").get<int>();
  ms.fingerprint = fp_modes;
  ms.mu = mj.at("mu").get<std::vector<double>>();
  for (const json& h : mj.at("hbar")) ms.hbar.push_back(v3_of(h));
  std::int64_t ndof = mj.at("ndof").get<std::int64_t>();
  if (ndof != forms.ndof())
    throw PipelineError(5, "stale artifact modes/modes.json (dof count changed); rerun the modes stage");
  std::vector<double> flat;
  try {
    flat = read_f64(store.file("modes/s.f64"));
  } catch (const std::exception& e) {
    throw PipelineError(5, std::string("missing or unreadable artifact modes/s.f64: ") + e.what());
  }
  if ((std::int64_t)flat.size() != (std::int64_t)ms.N * ndof)
    throw PipelineError(5, "stale artifact modes/s.f64 (size mismatch); rerun the modes stage");
  ms.s.assign((std::size_t)ms.N, {});
  for (int i = 0; i < ms.N; ++i)
    ms.s[(std::size_t)i].assign(flat.begin() + (std::int64_t)i * ndof,
                                flat.begin() + (std::int64_t)(i + 1) * ndof);

  KernelBundle kb = as_code(4, [&] {
    return kernel_series(ms, forms, field.xi, cfg.kernel_T, cfg.kernel_dt);
  });

  json cj = store.read_json("coeffs.json", stage_fingerprint(cfg, "correctors"), "correctors");
  double Mstar = cj.at("Mstar").get<double>();

  std::vector<double> k1p(kb.t.size());
  for (std::size_t k = 0; k < kb.t.size(); ++k) k1p[k] = kb.kbar1_prime_at(kb.t[k]) / Mstar;
  std::vector<double> L =
      as_code(4, [&] { return resolvent_kernel(kb.kbar1_at(0.0) / Mstar, k1p, kb.dt); });

  std::vector<double> wave;
  double wave_dev = 0;
  if (wave_check) {
    wave = as_code(4, [&] { return kernel_wave_oracle(*cfg.soft, geom, field.xi, kb.t); });
    for (std::size_t k = 0; k < kb.t.size(); ++k)
      wave_dev = std::max(wave_dev, std::fabs(kb.kbar1[k] - wave[k]));
  }

  std::uint64_t fp = stage_fingerprint(cfg, "kernel");
  json kj;
  kj["fingerprint"] = hex64(fp);
  kj["T"] = kb.T;
  kj["dt"] = kb.dt;
  kj["xi"] = j_vec3(field.xi);
  kj["mu"] = kb.mu;
  json hb = json::array();
  for (const Vec3& h : kb.hbar) hb.push_back(j_vec3(h));
  kj["hbar"] = hb;
  kj["hx"] = kb.hx;
  kj["weight"] = kb.weight;
  kj["coupling"] = kb.coupling;
  kj["kbar1_0"] = kb.kbar1_at(0.0);
  if (wave_check) kj["wave_max_dev"] = wave_dev;
  store.write_json("kernel.json", kj);

  {
    std::vector<std::string> cols = {"t", "kbar1"};
    if (wave_check) cols.push_back("kbar1_wave");
    for (const char* c : {"kbarbar_11", "kbarbar_22", "kbarbar_33", "kbarbar_23", "kbarbar_13",
                          "kbarbar_12"})
      cols.push_back(c);
    std::vector<std::vector<double>> rows;
    for (std::size_t k = 0; k < kb.t.size(); ++k) {
      const Mat3& m = kb.kbarbar[k];
      std::vector<double> r = {kb.t[k], kb.kbar1[k]};
      if (wave_check) r.push_back(wave[k]);
      for (double v : {m[0][0], m[1][1], m[2][2], m[1][2], m[0][2], m[0][1]}) r.push_back(v);
      rows.push_back(std::move(r));
    }
    write_csv(store.file_for_write("kernel.csv"), cols, rows);
  }
  {
    std::vector<std::vector<double>> rows;
    for (std::size_t k = 0; k < L.size(); ++k)
      rows.push_back({(double)k * kb.dt, L[k]});
    write_csv(store.file_for_write("resolvent.csv"), {"t", "L"}, rows);
  }

  json sum;
  sum["stage"] = "kernel";
  sum["modes"] = ms.N;
  sum["kbar1_0"] = kb.kbar1_at(0.0);
  sum["Mstar_minus_K1_0"] = Mstar - kb.kbar1_at(0.0);
  if (wave_check) sum["wave_max_dev"] = wave_dev;
  sum["artifact"] = "kernel.json";
  return sum;
}

json run_macro(const RunConfig& cfg, const ArtifactStore& store) {
  json cj = store.read_json("coeffs.json", stage_fingerprint(cfg, "correctors"), "correctors");
  json kj = store.read_json("kernel.json", stage_fingerprint(cfg, "kernel"), "kernel");
  HomogenizedCoefficients hc = hc_from_json(cj);
  if (!hc.fixed_direction)
    throw PipelineError(3, "macro: the scalar reduction needs a constant-direction field");

  std::vector<double> mu = kj.at("mu").get<std::vector<double>>();
  std::vector<double> coupling = kj.at("coupling").get<std::vector<double>>();
  std::vector<Vec3> hbar;
  for (const json& h : kj.at("hbar")) hbar.push_back(v3_of(h));
  KernelBundle kb = as_code(4, [&] {
    return kernel_series_modal(mu, hbar, coupling, v3_of(kj.at("xi")), cfg.kernel_T, cfg.kernel_dt);
  });

  MacroOptions mo;
  mo.n = cfg.macro_n;
  mo.periodic = cfg.macro_periodic;
  mo.dt = cfg.macro_dt;
  mo.modes_cap = cfg.modes_cap;
  std::optional<MacroSolver> mac;
  as_code(4, [&] { mac.emplace(hc, kb, cfg.data, mo); return 0; });

  std::vector<std::vector<double>> rows;
  json snaps = json::array();
  std::size_t next_snap = 0;
  auto emit = [&] {
    MacroSolver::Limits lim = mac->reconstruct(true);
    double ub = 0;
    for (double v : lim.ubar) ub += v;
    ub /= (double)lim.ubar.size();
    rows.push_back({mac->time(), mac->mean_alpha(), ub, mac->max_abs_alpha()});
  };
  auto snap = [&] {
    while (next_snap < cfg.snapshots.size() &&
           mac->time() + 1e-12 >= cfg.snapshots[next_snap]) {
      MacroSolver::Limits lim = mac->reconstruct(false);
      std::string tag = std::to_string(next_snap);
      write_f64(store.file_for_write("alpha_" + tag + ".raw"), mac->alpha().data(), mac->alpha().size());
      std::vector<double> sg;
      sg.reserve(3 * lim.sigma.size());
      for (const Vec3& v : lim.sigma) {
        sg.push_back(v[0]);
        sg.push_back(v[1]);
        sg.push_back(v[2]);
      }
      write_f64(store.file_for_write("sigma_" + tag + ".raw"), sg.data(), sg.size());
      json e;
      e["t_requested"] = cfg.snapshots[next_snap];
      e["t"] = mac->time();
      e["n"] = cfg.macro_n;
      e["alpha"] = "alpha_" + tag + ".raw";
      e["sigma"] = "sigma_" + tag + ".raw";
      snaps.push_back(e);
      ++next_snap;
    }
  };
  int next = 1;
  double mark = cfg.T / cfg.samples;
  as_code(4, [&] {
    if (mac->time() + 1e-12 >= next * mark) {
      emit();
      while (next * mark <= mac->time() + 1e-12) ++next;
    }
    snap();
    while (mac->time() < cfg.T - 0.5 * mac->dt()) {
      mac->step();
      if (mac->time() + 1e-12 >= next * mark) {
        emit();
        while (next * mark <= mac->time() + 1e-12) ++next;
      }
      snap();
    }
    if (rows.empty() || rows.back()[0] < mac->time() - 1e-12) emit();
    return 0;
  });
  write_csv(store.file_for_write("macro.csv"), {"t", "mean_alpha", "mean_ubar", "max_abs_alpha"}, rows);

  std::uint64_t fp = stage_fingerprint(cfg, "macro");
  json m;
  m["fingerprint"] = hex64(fp);
  m["dt"] = mac->dt();
  m["steps"] = mac->steps();
  m["modes"] = mac->modes();
  m["final_time"] = mac->time();
  m["final_mean_alpha"] = rows.back()[1];
  m["final_mean_ubar"] = rows.back()[2];
  m["final_max_abs_alpha"] = rows.back()[3];
  if (!snaps.empty()) m["snapshots"] = snaps;
  store.write_json("macro.json", m);

  json sum = m;
  sum["stage"] = "macro";
  sum["artifact"] = "macro.json";
  return sum;
}

json run_fine(const RunConfig& cfg, const ArtifactStore& store, double eps) {
  CellGeometry geom = as_code(3, [&] { return build_geometry(cfg.inclusion, cfg.resolution); });
  FineOptions fo;
  fo.eps = eps;
  fo.dt = cfg.fine_dt;
  fo.cfl_safety = cfg.cfl_safety;
  std::optional<FineSolver> fs;
  as_code(4, [&] {
    fs.emplace(*cfg.hard, *cfg.soft, geom, cfg.field, cfg.data, cfg.vox_per_cell, fo);
    return 0;
  });

  int den = (int)std::lround(1.0 / eps);
  std::string base = "fine_eps" + std::to_string(den);

  bool has_f = !cfg.data.f.empty();
  std::vector<std::vector<double>> rows;
  json snaps = json::array();
  std::size_t next_snap = 0;
  auto emit = [&] {
    Vec3 hm = fs->phase_mean(0), sm = fs->phase_mean(1);
    rows.push_back({fs->time(), fs->energy_staggered(), fs->energy_plain(), fs->kinetic(),
                    fs->work_accum(), fs->max_rotation_norm_dev(), hm[0], hm[1], hm[2], sm[0],
                    sm[1], sm[2]});
  };
  auto snap = [&] {
    while (next_snap < cfg.snapshots.size() &&
           fs->time() + 1e-12 >= cfg.snapshots[next_snap]) {
      std::string tag = std::to_string(next_snap);
      write_f64(store.file_for_write("u_" + base + "_" + tag + ".raw"), fs->displacement().data(),
                fs->displacement().size());
      json e;
      e["t_requested"] = cfg.snapshots[next_snap];
      e["t"] = fs->time();
      e["u"] = "u_" + base + "_" + tag + ".raw";
      snaps.push_back(e);
      ++next_snap;
    }
  };
  double e_first = 0, w_first = 0;
  as_code(4, [&] {
    fs->step();
    e_first = fs->energy_staggered();
    w_first = fs->work_accum();
    emit();
    snap();
    int next = 1;
    double mark = cfg.T / cfg.samples;
    while (next * mark <= fs->time() + 1e-12) ++next;
    while (fs->time() < cfg.T - 0.5 * fs->dt()) {
      fs->step();
      if (fs->time() + 1e-12 >= next * mark) {
        emit();
        while (next * mark <= fs->time() + 1e-12) ++next;
      }
      snap();
    }
    if (rows.back()[0] < fs->time() - 1e-12) emit();
    return 0;
  });
  write_csv(store.file_for_write(base + ".csv"),
            {"t", "energy_staggered", "energy_plain", "kinetic", "work", "rotation_dev",
             "hard_mean_x", "hard_mean_y", "hard_mean_z", "soft_mean_x", "soft_mean_y",
             "soft_mean_z"},
            rows);

  double e_last = fs->energy_staggered(), w_last = fs->work_accum();
  double scale = std::max({std::fabs(e_first), std::fabs(e_last), 1e-300});
  json m;
  m["fingerprint"] = hex64(stage_fingerprint(cfg, "fine"));
  m["eps"] = eps;
  m["dt"] = fs->dt();
  m["dt_stable"] = fs->dt_stable();
  m["steps"] = fs->steps();
  m["rotation_dev"] = fs->max_rotation_norm_dev();
  if (has_f)
    m["work_balance"] = std::fabs((e_last - e_first) - (w_last - w_first)) / scale;
  else
    m["energy_drift"] = std::fabs(e_last - e_first) / scale;
  if (!snaps.empty()) m["snapshots"] = snaps;
  store.write_json(base + ".json", m);

  json sum = m;
  sum["stage"] = "fine";
  sum["artifact"] = base + ".json";
  return sum;
}

// ------------------------------------------------------------ comparison

PhaseTargets phase_targets_case2(const MacroSolver& mac, const HomogenizedCoefficients& hc,
                                 int cells) {
  PhaseTargets out;
  std::size_t nc = (std::size_t)cells * cells * cells;
  out.hard.assign(nc, Vec3{});
  out.soft.assign(nc, Vec3{});
  for (int cx = 0; cx < cells; ++cx)
    for (int cy = 0; cy < cells; ++cy)
      for (int cz = 0; cz < cells; ++cz) {
        Vec3 x{(cx + 0.5) / cells, (cy + 0.5) / cells, (cz + 0.5) / cells};
        Vec3 u1 = mac.u1_at(x);
        Vec3 u2 = mac.u2avg_at(x);
        std::size_t ci = (std::size_t)(cx * cells + cy) * cells + cz;
        out.hard[ci] = hc.vol1 * u1;
        out.soft[ci] = hc.vol2 * u1 + u2;
      }
  return out;
}

PhaseTargets phase_targets_frozen(const KernelBundle& kb, const MacroData& data, double vol1,
                                  double vol2, int cells, double t) {
  PhaseTargets out;
  std::size_t nc = (std::size_t)cells * cells * cells;
  out.hard.assign(nc, Vec3{});
  out.soft.assign(nc, Vec3{});
  bool has_f = !data.f.empty();
  int nm = (int)kb.mu.size();
  int nsub = std::max(1, (int)std::ceil(t / kb.dt - 1e-12));
  double dtm = t > 0 ? t / nsub : 0.0;
  for (int cx = 0; cx < cells; ++cx)
    for (int cy = 0; cy < cells; ++cy)
      for (int cz = 0; cz < cells; ++cz) {
        Vec3 x{(cx + 0.5) / cells, (cy + 0.5) / cells, (cz + 0.5) / cells};
        Vec3 u0 = data.u0.empty() ? Vec3{} : data.u0.eval(x, 0.0);
        Vec3 v0 = data.v0.empty() ? Vec3{} : data.v0.eval(x, 0.0);
        Vec3 fluct{};
        for (int i = 0; i < nm; ++i) {
          double mu = kb.mu[i];
          double coef = std::sin(mu * t) / mu * dot(kb.hbar[i], v0);
          if (has_f && t > 0) {
            // forced oscillator k'' + mu^2 k = hbar.f from rest, exact per
            // substep for the midpoint value of the forcing
            double cd = std::cos(mu * dtm), sd = std::sin(mu * dtm);
            double k = 0, kd = 0, ts = 0;
            for (int s = 0; s < nsub; ++s) {
              double fb = dot(kb.hbar[i], data.f.eval(x, ts + 0.5 * dtm));
              double kn = cd * k + (sd / mu) * kd + ((1 - cd) / (mu * mu)) * fb;
              double kdn = -mu * sd * k + cd * kd + (sd / mu) * fb;
              k = kn;
              kd = kdn;
              ts += dtm;
            }
            coef += k;
          }
          fluct = fluct + coef * kb.hbar[i];
        }
        std::size_t ci = (std::size_t)(cx * cells + cy) * cells + cz;
        out.hard[ci] = vol1 * u0;
        out.soft[ci] = vol2 * u0 + fluct;
      }
  return out;
}

json run_converge(const RunConfig& cfg, const ArtifactStore& store) {
  if (cfg.eps.empty())
    throw PipelineError(2, "config: scenario.eps must list the fine-scale separations");
  ModelContext ctx;
  build_context(cfg, ctx);
  if (ctx.geom.soft_elems.empty())
    throw PipelineError(3, "converge: the cell has no inclusion");
  bool case2 = ctx.field.fixed_direction;

  const int K = 5;
  double Tk = cfg.T / K;
  std::vector<std::vector<double>> rows;
  json table = json::array();
  for (double eps : cfg.eps) {
    FineOptions fo;
    fo.eps = eps;
    fo.dt = cfg.fine_dt;
    fo.cfl_safety = cfg.cfl_safety;
    fo.snap_interval = Tk;
    std::optional<FineSolver> fine;
    as_code(4, [&] {
      fine.emplace(*cfg.hard, *cfg.soft, ctx.geom, cfg.field, cfg.data, cfg.vox_per_cell, fo);
      return 0;
    });
    std::optional<MacroSolver> mac;
    if (case2) {
      MacroOptions mo;
      mo.n = cfg.macro_n;
      mo.dt = cfg.macro_dt;
      mo.modes_cap = cfg.modes_cap;
      mo.snap_interval = Tk;
      as_code(4, [&] { mac.emplace(ctx.hc, ctx.kb, cfg.data, mo); return 0; });
    }

    int cells = fine->cells_per_side();
    double cvol = eps * eps * eps;
    double e2h = 0, e2s = 0, r2h = 0, r2s = 0;
    for (int jstep = 1; jstep <= K; ++jstep) {
      double tj = cfg.T * jstep / K;
      as_code(4, [&] {
        fine->advance_to(tj);
        if (mac) mac->advance_to(tj);
        return 0;
      });
      PhaseTargets tg = case2 ? phase_targets_case2(*mac, ctx.hc, cells)
                              : phase_targets_frozen(ctx.kb, cfg.data, ctx.geom.vol1,
                                                     ctx.geom.vol2, cells, fine->time());
      std::vector<Vec3> fh = fine->phase_cell_averages(0);
      std::vector<Vec3> fsoft = fine->phase_cell_averages(1);
      for (std::size_t ci = 0; ci < fh.size(); ++ci) {
        Vec3 dh = fh[ci] - tg.hard[ci], ds = fsoft[ci] - tg.soft[ci];
        e2h += dot(dh, dh) * cvol;
        e2s += dot(ds, ds) * cvol;
        r2h += dot(tg.hard[ci], tg.hard[ci]) * cvol;
        r2s += dot(tg.soft[ci], tg.soft[ci]) * cvol;
      }
    }
    double eha = std::sqrt(e2h / K), esa = std::sqrt(e2s / K);
    double rh = std::sqrt(r2h / K), rs = std::sqrt(r2s / K);
    double ehr = rh > 1e-14 ? eha / rh : eha;
    double esr = rs > 1e-14 ? esa / rs : esa;
    rows.push_back({eps, eha, esa, ehr, esr});
    json row;
    row["eps"] = eps;
    row["err_hard_phase"] = eha;
    row["err_soft_phase"] = esa;
    row["err_hard_rel"] = ehr;
    row["err_soft_rel"] = esr;
    table.push_back(row);
  }
  write_csv(store.file_for_write("converge.csv"),
            {"eps", "err_hard_phase", "err_soft_phase", "err_hard_rel", "err_soft_rel"}, rows);

  json cv;
  cv["fingerprint"] = hex64(stage_fingerprint(cfg, "converge"));
  cv["sample_times"] = K;
  cv["frozen_hard_phase"] = !case2;
  cv["table"] = table;
  json ratios = json::array();
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
    json r;
    r["eps_coarse"] = rows[i][0];
    r["eps_fine"] = rows[i + 1][0];
    r["hard_ratio"] = rows[i + 1][1] > 0 ? rows[i][1] / rows[i + 1][1] : 0.0;
    r["soft_ratio"] = rows[i + 1][2] > 0 ? rows[i][2] / rows[i + 1][2] : 0.0;
    ratios.push_back(r);
  }
  cv["ratios"] = ratios;
  store.write_json("converge.json", cv);

  json sum = cv;
  sum["stage"] = "converge";
  sum["artifact"] = "converge.json";
  return sum;
}

json run_check(const RunConfig& cfg, const ArtifactStore& store) {
  json cell = store.read_json("cell.json", stage_fingerprint(cfg, "cell"), "cell");
  json cj = store.read_json("coeffs.json", stage_fingerprint(cfg, "correctors"), "correctors");
  json kj = store.read_json("kernel.json", stage_fingerprint(cfg, "kernel"), "kernel");

  double Mstar = cj.at("Mstar").get<double>();
  double mstar = cj.at("mstar").get<double>();
  double cstar = cj.at("cstar").get<double>();
  double kbar1_0 = kj.at("kbar1_0").get<double>();
  double int_bhat2 = cj.at("int_bhat2").get<double>();
  double vol1 = cj.at("vol1").get<double>(), vol2 = cj.at("vol2").get<double>();
  Vec3 lambdastar = v3_of(cj.at("lambdastar"));
  Vec3 mustar = v3_of(cj.at("mustar"));
  Vec3 xi = v3_of(cj.at("xi"));
  Vec3 int_bhat = v3_of(cj.at("int_bhat"));
  Vec3 mustar_ref = vol1 * xi + int_bhat;
  int rank = cj.at("rank").get<int>();
  // bracket mass at t=0 less the hard-phase contributions; equals the
  // spectral completeness defect int |bhat|^2 - sum_i (hbar_i . xi)^2 >= 0
  double mass_defect = Mstar - kbar1_0 - vol1 - mstar;

  json rep;
  rep["fingerprint"] = hex64(stage_fingerprint(cfg, "report"));
  rep["cell"] = cell;
  rep["coefficients"] = cj;
  rep["kernel"]["modes"] = kj.at("mu").size();
  rep["kernel"]["kbar1_0"] = kbar1_0;
  rep["kernel"]["Mstar_minus_K1_0"] = Mstar - kbar1_0;
  rep["kernel"]["sum_rule_defect"] = mass_defect;
  if (kj.contains("wave_max_dev")) rep["kernel"]["wave_max_dev"] = kj.at("wave_max_dev");
  rep["frozen_hard_phase"] = rank >= 2;

  json ex;
  ex["Mstar_minus_1"] = std::fabs(Mstar - 1.0);
  ex["cstar_abs"] = std::fabs(cstar);
  ex["lambdastar_norm"] = norm(lambdastar);
  ex["mustar_minus_xi"] = norm(mustar - xi);
  rep["example_identities"] = ex;

  // named invariants with pass flags; any failure flips the exit status
  json checks;
  auto put = [&](const char* name, double value, bool pass) {
    checks[name] = json{{"value", value}, {"pass", pass}};
  };
  put("volume_partition", std::fabs(vol1 + vol2 - 1.0), std::fabs(vol1 + vol2 - 1.0) <= 1e-12);
  put("mustar_identity", norm(mustar - mustar_ref), norm(mustar - mustar_ref) <= 1e-10);
  put("mstar_dual_route", cj.at("mstar_dual_dev").get<double>(),
      cj.at("mstar_dual_dev").get<double>() <= 1e-8);
  put("mass_dominance", Mstar - kbar1_0, Mstar - kbar1_0 > 0);
  put("sum_rule_sign", mass_defect, mass_defect >= -1e-10);
  put("cstar_nonnegative", cstar, cstar >= -1e-12);
  put("int_bhat2_bound", int_bhat2 - vol2, int_bhat2 <= vol2 + 1e-10);
  rep["checks"] = checks;

  auto merge_if = [&](const std::string& rel, const char* stage, const char* key) {
    if (fs::exists(store.file(rel)))
      rep[key] = store.read_json(rel, stage_fingerprint(cfg, stage), stage);
  };
  merge_if("macro.json", "macro", "macro");
  merge_if("converge.json", "converge", "convergence");
  for (double eps : cfg.eps) {
    int den = (int)std::lround(1.0 / eps);
    std::string rel = "fine_eps" + std::to_string(den) + ".json";
    if (fs::exists(store.file(rel)))
      rep["fine_eps" + std::to_string(den)] =
          store.read_json(rel, stage_fingerprint(cfg, "fine"), "fine");
  }
  store.write_json("report.json", rep);

  std::string bad;
  for (auto it = checks.begin(); it != checks.end(); ++it)
    if (!it.value().at("pass").get<bool>()) bad = it.key();
  if (!bad.empty())
    throw PipelineError(4, "check: invariant '" + bad + "' failed (see report.json)");

  json sum;
  sum["stage"] = "check";
  sum["Mstar_minus_K1_0"] = Mstar - kbar1_0;
  sum["sum_rule_defect"] = mass_defect;
  sum["frozen_hard_phase"] = rank >= 2;
  sum["artifact"] = "report.json";
  return sum;
}

}  // namespace memcell
