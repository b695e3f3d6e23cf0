#pragma once
// Run configuration, artifact store with fingerprint-based staleness checks,
// and the orchestration entry points behind the command-line stages.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "memcell/correctors.hpp"
#include "memcell/finescale.hpp"
#include "memcell/kernel.hpp"
#include "memcell/macro.hpp"
#include "memcell/spectrum.hpp"
#include "memcell/unitcell.hpp"

namespace memcell {

// Exit-code discipline: 2 config, 3 geometry/field admissibility, 4 numerical
// failure, 5 missing or stale artifact; anything else surfaces as 1.
struct PipelineError : std::runtime_error {
  int code;
  PipelineError(int c, const std::string& m) : std::runtime_error(m), code(c) {}
};

struct RunConfig {
  InclusionSpec inclusion;
  int resolution = 32;
  FieldSpec field;
  std::optional<ElasticTensor> hard, soft;

  int modes = 60;
  double kernel_T = 0, kernel_dt = 0;  // resolved: scenario T, T/400
  int macro_n = 32;
  double macro_dt = 0;
  int modes_cap = -1;
  bool macro_periodic = false;
  int vox_per_cell = 0;  // resolved: cell resolution
  double fine_dt = 0, cfl_safety = 0.9;

  MacroData data;
  double T = 0;
  std::vector<double> eps;
  int samples = 200;
  std::vector<double> snapshots;  // times at which field snapshots are dumped
  std::uint64_t seed = 0;

  nlohmann::json raw;  // for stage fingerprint slices
};

RunConfig parse_config(const nlohmann::json& j);          // throws code 2
RunConfig load_config(const std::filesystem::path& p);    // throws code 2

// FNV-1a of the canonical dump of the config slice a stage depends on.
std::uint64_t stage_fingerprint(const RunConfig& cfg, const std::string& stage);

// JSON artifacts under a root directory.  Every artifact carries the
// fingerprint of the config slice it was produced from; reads verify it.
struct ArtifactStore {
  std::filesystem::path root;
  explicit ArtifactStore(std::filesystem::path r) : root(std::move(r)) {}

  std::filesystem::path file(const std::string& rel) const { return root / rel; }
  // like file(), but makes the parent directory; use for raw/csv writes
  std::filesystem::path file_for_write(const std::string& rel) const {
    std::filesystem::path p = root / rel;
    std::filesystem::create_directories(p.parent_path());
    return p;
  }
  void write_json(const std::string& rel, const nlohmann::json& j) const;
  // missing or fingerprint mismatch -> PipelineError(5)
  nlohmann::json read_json(const std::string& rel, std::uint64_t want_fp,
                           const std::string& producer) const;
};

// Everything the in-process stages share.  Built in place: the FEM operators
// keep pointers into geom, so the context must not move afterwards.
struct ModelContext {
  CellGeometry geom;
  SampledField field;
  std::unique_ptr<PeriodicElasticity> op;
  std::unique_ptr<ConstrainedForms> forms;  // null when the cell has no inclusion
  CorrectorSet cs;
  HomogenizedCoefficients hc;
  ModeSet modes;
  KernelBundle kb;
};

// modes_override > 0 replaces cfg.modes; need_modes=false skips the
// eigensolve (and the kernel bundle).
void build_context(const RunConfig& cfg, ModelContext& out, int modes_override = 0,
                   bool need_modes = true);

nlohmann::json run_cell(const RunConfig& cfg, const ArtifactStore& store);
nlohmann::json run_modes(const RunConfig& cfg, const ArtifactStore& store);
nlohmann::json run_correctors(const RunConfig& cfg, const ArtifactStore& store);
nlohmann::json run_kernel(const RunConfig& cfg, const ArtifactStore& store, bool wave_check);
nlohmann::json run_macro(const RunConfig& cfg, const ArtifactStore& store);
nlohmann::json run_fine(const RunConfig& cfg, const ArtifactStore& store, double eps);
nlohmann::json run_converge(const RunConfig& cfg, const ArtifactStore& store);
nlohmann::json run_check(const RunConfig& cfg, const ArtifactStore& store);

// Homogenized phase-average targets on the eps-cell centers at time t,
// matching FineSolver::phase_cell_averages.  Case (ii) uses the macro
// solution; the frozen variant takes the modal data directly.
struct PhaseTargets {
  std::vector<Vec3> hard, soft;
};
PhaseTargets phase_targets_case2(const MacroSolver& mac, const HomogenizedCoefficients& hc,
                                 int cells);
PhaseTargets phase_targets_frozen(const KernelBundle& kb, const MacroData& data, double vol1,
                                  double vol2, int cells, double t);

}  // namespace memcell
