#include "pit/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pit/error.hpp"
#include "pit/exec.hpp"
#include "pit/expr.hpp"
#include "pit/policy.hpp"
#include "pit/sparsity.hpp"
#include "pit/tensor_io.hpp"
#include "pit/tiles.hpp"

namespace pit {
namespace {

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  std::string expr;
  std::string shape;
  std::vector<std::string> sparsity_files;
  std::string random_spec;
  std::string ragged;
  int samples = 1;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string dtype = "f32";
  std::string profile_path;
  std::string plan = "auto";
  std::string tile;
  bool verify = false;
  std::string out_path;
  std::string csv_path;
  std::vector<double> ratios{0.5, 0.9, 0.95, 0.99};
  std::vector<std::string> plans{"dense", "pit:m", "pit:k"};
  std::string granularity = "1x32";
  int reps = 3;
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  return parts;
}

std::int64_t parse_int(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  std::int64_t v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw UsageError("invalid " + what + " '" + s + "'");
  return v;
}

double parse_double(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw UsageError("invalid " + what + " '" + s + "'");
  return v;
}

// "m=512,k=512,n=512"
ExtentMap parse_shape(const std::string& text) {
  ExtentMap extents;
  for (const auto& part : split(text, ',')) {
    const auto eq = part.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("invalid shape binding '" + part + "'");
    extents[part.substr(0, eq)] = parse_int(part.substr(eq + 1), "extent");
  }
  return extents;
}

// "8x1"
Dims2 parse_dims(const std::string& text) {
  const auto parts = split(text, 'x');
  if (parts.size() != 2) throw UsageError("expected <rows>x<cols>, got '" + text + "'");
  return {parse_int(parts[0], "extent"), parse_int(parts[1], "extent")};
}

struct RandomSpec {
  Dims2 granularity;
  double zero_ratio = 0.0;
};

// "8x1:0.95"
RandomSpec parse_random(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw UsageError("expected g0xg1:ratio, got '" + text + "'");
  RandomSpec spec{parse_dims(text.substr(0, colon)),
                  parse_double(text.substr(colon + 1), "zero ratio")};
  if (spec.zero_ratio < 0.0 || spec.zero_ratio > 1.0) throw UsageError("zero ratio must be in [0, 1]");
  return spec;
}

std::string format_cost(double seconds) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", seconds);
  return buf;
}

std::string plan_label(const SparseKernelPlan& plan) {
  return plan.is_dense() ? "dense" : "pit:" + plan.pit_axis->symbol;
}

const KernelRegistry& builtin_registry() {
  static const KernelRegistry reg = register_builtin_kernels();
  return reg;
}

class Session {
 public:
  Session(const RunConfig& cfg, std::ostream& out, std::ostream& err)
      : cfg_(cfg), out_(out), err_(err) {}

  OperatorBinding bind() const {
    if (cfg_.expr.empty()) throw UsageError("--expr is required");
    const auto expr = parse_expr(cfg_.expr);
    return bind_operator(expr, parse_shape(cfg_.shape));
  }

  std::int64_t slice_count(const OperatorBinding& op) const {
    std::int64_t n = 1;
    const auto extents = parse_shape(cfg_.shape);
    for (const auto& s : op.independent_slice_axes) n *= extents.at(s);
    return n;
  }

  // Sparsity samples for the sparse operand, from exactly one source.
  std::vector<SparsityAnnotation> samples(const OperatorBinding& op) const {
    const int sources = (cfg_.sparsity_files.empty() ? 0 : 1) + (cfg_.random_spec.empty() ? 0 : 1) +
                        (cfg_.ragged.empty() ? 0 : 1);
    if (sources != 1) {
      throw UsageError("give exactly one of --sparsity-file, --random, --ragged");
    }
    const Dims2 shape = op.problem.sparse_operand();
    std::vector<SparsityAnnotation> result;
    if (!cfg_.sparsity_files.empty()) {
      for (const auto& path : cfg_.sparsity_files) {
        auto ann = load_annotation(path);
        if (ann.shape() != shape) {
          throw ShapeError(path + ": annotation shape " + to_string(ann.shape()) +
                           " does not match operand " + to_string(shape));
        }
        result.push_back(std::move(ann));
      }
    } else if (!cfg_.random_spec.empty()) {
      if (cfg_.samples < 1) throw UsageError("--samples must be at least 1");
      const auto spec = parse_random(cfg_.random_spec);
      for (int i = 0; i < cfg_.samples; ++i) {
        result.push_back(random_annotation(shape, spec.granularity, spec.zero_ratio,
                                           cfg_.seed + static_cast<std::uint64_t>(i)));
      }
    } else {
      std::vector<std::int64_t> lengths;
      for (const auto& s : split(cfg_.ragged, ',')) lengths.push_back(parse_int(s, "length"));
      result.push_back(from_ragged_lengths(lengths, shape));
    }
    return result;
  }

  std::optional<ProfileTable> profile() const {
    if (cfg_.profile_path.empty()) return std::nullopt;
    auto table = load_profile(cfg_.profile_path);
    if (table.foreign_fingerprint) {
      err_ << "warning: profile was recorded on a different machine (" << table.fingerprint
           << ")\n";
    }
    return table;
  }

  ProfileTable require_profile() const {
    auto p = profile();
    if (!p) throw IoError("no profile: pass --profile or set PIT_PROFILE");
    return *p;
  }

  SelectionOptions selection_options(const std::string& plan) const {
    SelectionOptions opts;
    if (plan == "dense") {
      opts.allow_sparse = false;
    } else if (plan.rfind("pit:", 0) == 0) {
      opts.allow_dense = false;
      opts.only_axis = plan.substr(4);
    } else if (plan != "auto") {
      throw UsageError("--plan must be auto, dense or pit:<axis>, got '" + plan + "'");
    }
    if (!cfg_.tile.empty()) opts.only_impl = cfg_.tile;
    return opts;
  }

  // Plan for `plan_name`; without a profile the tile and plan must be explicit.
  SparseKernelPlan choose(const OperatorBinding& op, std::span<const SparsityAnnotation> samples,
                          const std::string& plan_name) const {
    const auto opts = selection_options(plan_name);
    const auto prof = profile();
    if (!prof) {
      if (plan_name == "auto" || cfg_.tile.empty()) {
        throw IoError("no profile: pass --profile or set PIT_PROFILE (or force --plan and --tile)");
      }
      const TileKernel* k = builtin_registry().find_impl(cfg_.tile);
      if (k == nullptr) throw UsageError("unknown tile '" + cfg_.tile + "'");
      std::optional<PitAxis> axis;
      if (plan_name != "dense") {
        const auto sym = plan_name.substr(4);
        if (sym == op.row_symbol) {
          axis = PitAxis{sym, 0};
        } else if (sym == op.col_symbol) {
          axis = PitAxis{sym, 1};
        } else {
          throw UsageError("'" + sym + "' is not a dimension of the sparse operand");
        }
      }
      return make_plan(op.problem, k->desc, axis);
    }
    return kernel_selection(op, samples, builtin_registry(), *prof, opts).best;
  }

  template <typename T>
  struct Outcome {
    DenseTensor<T> output;
    std::int64_t launches = 0;
    double max_error = 0.0;
  };

  // Executes the plan on seeded random operands shaped by the annotation.
  template <typename T>
  Outcome<T> execute(const OperatorBinding& op, const SparseKernelPlan& plan,
                     const SparsityAnnotation& ann, bool verify, double* seconds = nullptr) const {
    const ExecOptions opts{cfg_.workers};
    std::mt19937_64 rng(cfg_.seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    const Dims2 ad = ann.shape();
    auto random_a = [&] {
      auto a = DenseTensor<T>::matrix(ad);
      const Dims2 g = ann.granularity();
      for (std::int64_t r = 0; r < ad.rows; ++r) {
        for (std::int64_t c = 0; c < ad.cols; ++c) {
          if (ann.test(r / g.rows, c / g.cols)) a.at(r, c) = static_cast<T>(dist(rng));
        }
      }
      return to_layout(a, plan.sparse_layout);
    };
    Outcome<T> res;
    if (op.op == OpKind::kReduceSum) {
      const auto a = random_a();
      const auto t0 = std::chrono::steady_clock::now();
      auto r = run_sparse_reduce_sum(plan, a, ann, builtin_registry(), opts);
      if (seconds) *seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (verify) res.max_error = max_relative_error(r.output, reduce_sum_reference(a));
      res.output = std::move(r.output);
      res.launches = r.launches;
      return res;
    }
    const std::int64_t m = op.problem.extents[0], k = op.problem.extents[1], n = op.problem.extents[2];
    const std::int64_t slices = slice_count(op);
    std::vector<std::int64_t> out_shape;
    if (slices > 1) out_shape.push_back(slices);
    out_shape.push_back(m);
    out_shape.push_back(n);
    res.output = DenseTensor<T>(out_shape);
    const auto idx = plan.is_dense() ? MicroTileIndex{}
                                     : build_index(ann, plan.micro_tile, *plan.pit_axis, cfg_.workers);
    double total = 0.0;
    for (std::int64_t s = 0; s < slices; ++s) {
      const auto a = random_a();
      auto b = DenseTensor<T>::matrix({k, n});
      for (auto& v : b.values()) v = static_cast<T>(dist(rng));
      const auto t0 = std::chrono::steady_clock::now();
      auto r = plan.is_dense() ? run_sparse_matmul(plan, a, b, ann, builtin_registry(), opts)
                               : run_sparse_matmul(plan, a, b, idx, builtin_registry(), opts);
      total += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (verify) res.max_error = std::max(res.max_error, max_relative_error(r.output, run_dense_reference(a, b)));
      std::copy(r.output.values().begin(), r.output.values().end(),
                res.output.values().begin() + s * m * n);
      res.launches += r.launches;
    }
    if (seconds) *seconds = total;
    return res;
  }

  int analyze() const {
    if (cfg_.expr.empty()) throw UsageError("--expr is required");
    const auto expr = parse_expr(cfg_.expr);
    const ExtentMap extents = cfg_.shape.empty() ? ExtentMap{} : parse_shape(cfg_.shape);
    out_ << "expr " << expr.to_string() << '\n';
    out_ << std::left << std::setw(8) << "axis" << std::setw(11) << "kind" << std::setw(17)
         << "category" << std::setw(5) << "pit" << "extent\n";
    for (const auto& a : classify_axes(expr, extents)) {
      out_ << std::setw(8) << a.name << std::setw(11) << to_string(a.kind) << std::setw(17)
           << to_string(a.category) << std::setw(5) << (a.is_pit ? "yes" : "no")
           << (a.extent == 0 ? std::string("-") : std::to_string(a.extent)) << '\n';
    }
    const auto simple = simplify(expr);
    if (!simple.independent_slice_axes.empty()) out_ << "simplified " << simple.expr.to_string() << '\n';
    return kExitOk;
  }

  int profile_cmd() const {
    if (cfg_.out_path.empty()) throw UsageError("--out is required");
    if (cfg_.reps < 1) throw UsageError("--reps must be at least 1");
    ProfileOptions opts;
    opts.reps = cfg_.reps;
    const auto table = pit::profile(builtin_registry(), opts);
    save_profile(table, cfg_.out_path);
    out_ << "profiled " << table.costs.size() << " kernels into " << cfg_.out_path << '\n';
    return kExitOk;
  }

  int select() const {
    const auto op = bind();
    const auto anns = samples(op);
    const auto prof = require_profile();
    const auto result =
        kernel_selection(op, anns, builtin_registry(), prof, selection_options(cfg_.plan));
    out_ << result.best.dump() << '\n';
    out_ << std::left << std::setw(24) << "impl" << std::setw(8) << "plan" << std::setw(11)
         << "microtile" << std::setw(12) << "num_tiles" << std::setw(12) << "launches" << "cost\n";
    for (const auto& c : result.candidates) {
      std::int64_t tiles = 0, launches = 0;
      for (auto v : c.num_tiles) tiles += v;
      for (auto v : c.launches) launches += v;
      out_ << std::setw(24) << c.plan.tile.impl_id << std::setw(8) << plan_label(c.plan)
           << std::setw(11) << to_string(c.plan.micro_tile) << std::setw(12) << tiles
           << std::setw(12) << launches << format_cost(c.cost) << '\n';
    }
    return kExitOk;
  }

  template <typename T>
  int run_typed() const {
    const auto op = bind();
    const auto anns = samples(op);
    const auto plan = choose(op, anns, cfg_.plan);
    out_ << plan.dump() << '\n';
    const auto res = execute<T>(op, plan, anns.front(), cfg_.verify);
    out_ << "launches " << res.launches << '\n';
    if (!cfg_.out_path.empty()) save_tensor(res.output, cfg_.out_path);
    if (cfg_.verify) {
      const bool ok = res.max_error <= 1e-5;
      out_ << "max_rel_err " << format_cost(res.max_error) << '\n';
      out_ << "verify " << (ok ? "PASS" : "FAIL") << '\n';
      if (!ok) return kExitVerifyFailed;
    }
    return kExitOk;
  }

  int run() const { return cfg_.dtype == "f64" ? run_typed<double>() : run_typed<float>(); }

  template <typename T>
  int bench_typed() const {
    const auto op = bind();
    if (!cfg_.sparsity_files.empty() || !cfg_.ragged.empty() || !cfg_.random_spec.empty()) {
      throw UsageError("bench generates its own samples; use --granularity and --ratios");
    }
    if (cfg_.reps < 1) throw UsageError("--reps must be at least 1");
    const Dims2 g = parse_dims(cfg_.granularity);
    const Dims2 shape = op.problem.sparse_operand();
    std::string shape_text;
    for (auto e : op.problem.extents) shape_text += (shape_text.empty() ? "" : "x") + std::to_string(e);

    std::ofstream file;
    if (!cfg_.csv_path.empty()) {
      file.open(cfg_.csv_path);
      if (!file) throw IoError("cannot write " + cfg_.csv_path);
    }
    std::ostream& csv = cfg_.csv_path.empty() ? out_ : file;
    csv << "op,shape,granularity,zero_ratio,plan,microtile,tile,launches,wall_ms,dense_wall_ms,"
           "speedup\n";
    auto best_time = [&](const SparseKernelPlan& plan, const SparsityAnnotation& ann,
                         std::int64_t& launches) {
      double best = std::numeric_limits<double>::infinity();
      for (int r = 0; r < cfg_.reps; ++r) {
        double sec = 0;
        launches = execute<T>(op, plan, ann, false, &sec).launches;
        best = std::min(best, sec);
      }
      return best * 1e3;
    };
    for (double ratio : cfg_.ratios) {
      const std::vector<SparsityAnnotation> anns{random_annotation(shape, g, ratio, cfg_.seed)};
      std::int64_t dense_launches = 0;
      const auto dense_plan = choose(op, anns, "dense");
      const double dense_ms = best_time(dense_plan, anns.front(), dense_launches);
      for (const auto& name : cfg_.plans) {
        const auto plan = choose(op, anns, name);
        std::int64_t launches = 0;
        const double ms = best_time(plan, anns.front(), launches);
        csv << to_string(op.op) << ',' << shape_text << ',' << to_string(g) << ',' << ratio << ','
            << (name == "auto" ? "auto/" + plan_label(plan) : plan_label(plan)) << ','
            << to_string(plan.micro_tile) << ',' << plan.tile.shape_string() << ',' << launches
            << ',' << std::fixed << std::setprecision(3) << ms << ',' << dense_ms << ','
            << std::setprecision(2) << dense_ms / ms << std::defaultfloat << std::setprecision(6)
            << '\n';
      }
    }
    return kExitOk;
  }

  int bench() const { return cfg_.dtype == "f64" ? bench_typed<double>() : bench_typed<float>(); }

 private:
  const RunConfig& cfg_;
  std::ostream& out_;
  std::ostream& err_;
};

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  CLI::App app{"Permutation-invariant dynamic sparsity engine", "pit"};
  app.require_subcommand(1);

  auto add_expr = [&](CLI::App* sub, bool required) {
    auto* e = sub->add_option("--expr", cfg.expr, "Tensor expression, e.g. 'C[m,n] += A[m,k] * B[k,n]'");
    if (required) e->required();
    sub->add_option("--shape", cfg.shape, "Extents, e.g. m=512,k=512,n=512");
  };
  auto add_sources = [&](CLI::App* sub) {
    sub->add_option("--sparsity-file", cfg.sparsity_files, "Annotation file (repeatable)");
    sub->add_option("--random", cfg.random_spec, "Random annotation g0xg1:zero_ratio");
    sub->add_option("--ragged", cfg.ragged, "Row lengths len,len,... (reduce_sum)");
    sub->add_option("--samples", cfg.samples, "Random samples to draw")->check(CLI::PositiveNumber);
  };
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", cfg.seed, "Random seed");
    sub->add_option("--profile", cfg.profile_path, "Profile file")->envname("PIT_PROFILE");
    sub->add_option("--plan", cfg.plan, "auto | dense | pit:<axis>");
    sub->add_option("--tile", cfg.tile, "Restrict to one tile implementation id");
  };
  auto add_exec = [&](CLI::App* sub) {
    sub->add_option("--workers", cfg.workers, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--dtype", cfg.dtype, "f32 | f64")->check(CLI::IsMember({"f32", "f64"}));
  };

  auto* analyze = app.add_subcommand("analyze", "Classify the axes of a tensor expression");
  add_expr(analyze, true);

  auto* prof = app.add_subcommand("profile", "Profile the built-in tile kernels");
  prof->add_option("--reps", cfg.reps, "Timed repetitions per kernel");
  prof->add_option("--out", cfg.out_path, "Profile file to write")->required();

  auto* select = app.add_subcommand("select", "Select a plan from sparsity samples");
  add_expr(select, true);
  add_sources(select);
  add_common(select);

  auto* run = app.add_subcommand("run", "Execute a plan on seeded random operands");
  add_expr(run, true);
  add_sources(run);
  add_common(run);
  add_exec(run);
  run->add_flag("--verify", cfg.verify, "Compare against the f64 reference");
  run->add_option("--out", cfg.out_path, "Write the output tensor here");

  auto* bench = app.add_subcommand("bench", "Time plans over a sparsity sweep (CSV)");
  add_expr(bench, true);
  add_sources(bench);
  add_common(bench);
  add_exec(bench);
  bench->add_option("--granularity", cfg.granularity, "Block granularity g0xg1");
  bench->add_option("--ratios", cfg.ratios, "Zero ratios")->delimiter(',');
  bench->add_option("--plans", cfg.plans, "Plans: dense, auto, pit:<axis>")->delimiter(',');
  bench->add_option("--reps", cfg.reps, "Timed repetitions (best is reported)");
  bench->add_option("--csv", cfg.csv_path, "CSV output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  Session session(cfg, out, err);
  try {
    if (*analyze) return session.analyze();
    if (*prof) return session.profile_cmd();
    if (*select) return session.select();
    if (*run) return session.run();
    if (*bench) return session.bench();
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace pit
