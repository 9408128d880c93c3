#include "nf3d/nf3d.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace nf3d;

/// Settings shared by every command: a config file plus flag overrides.
struct ConfigFlags {
  std::string config_file;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> flags;  // applied after the file
  int threads = 0;
  bool print_config = false;

  void add(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "key = value configuration file");
    cmd->add_option("--set", sets, "override any configuration key (key=value), repeatable");
    cmd->add_option("--threads", threads, "worker threads (default: NF3D_THREADS or all cores)");
    cmd->add_flag("--print-config", print_config, "echo the effective configuration");
  }

  /// Registers a flag that maps onto a configuration key.
  void bind(CLI::App* cmd, const std::string& flag, const std::string& key, const std::string& help) {
    cmd->add_option_function<std::string>(
        flag, [this, key](const std::string& v) { flags.emplace_back(key, v); }, help);
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_file.empty()) apply_config_file(cfg, config_file);
    for (const auto& [k, v] : flags) set_option(cfg, k, v);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw Error(ErrorKind::Config, "--set expects key=value, got '" + s + "'");
      set_option(cfg, detail::trim(s.substr(0, eq)), s.substr(eq + 1));
    }
    if (threads > 0) cfg.threads = threads;
    validate(cfg);
    default_threads() = resolve_threads(cfg.threads);
    return cfg;
  }
};

void bind_model_flags(ConfigFlags& f, CLI::App* cmd) {
  f.bind(cmd, "--kind", "kind", "udf | sdf | auto");
  f.bind(cmd, "--width", "width", "hidden width");
  f.bind(cmd, "--bitwidth", "bitwidth", "quantization bitwidth b");
  f.bind(cmd, "--epochs", "epochs", "training epochs");
  f.bind(cmd, "--samples", "m_total", "training samples");
  f.bind(cmd, "--lr", "lr", "learning rate");
  f.bind(cmd, "--lambda-l1", "lambda_l1", "l1 penalty weight");
  f.bind(cmd, "--head", "head", "default | abs | relu | identity");
  f.bind(cmd, "--joint", "joint", "train geometry and color jointly (true/false)");
  f.bind(cmd, "--truncate", "truncate", "truncated distance loss (true/false)");
  f.bind(cmd, "--attributes", "attributes", "auto | on | off");
  f.bind(cmd, "--seed-params", "seed_params", "parameter initialization / shuffling seed");
  f.bind(cmd, "--seed-data", "seed_data", "training-set sampling seed");
  f.bind(cmd, "--r-mc", "r_mc", "marching-cubes resolution");
  f.bind(cmd, "--points", "n_points", "points sampled from the decoded surface");
}

void announce_seeds(RunConfig& cfg) {
  if (resolve_seeds(cfg))
    std::cout << "seeds: --seed-params " << *cfg.seed_params << " --seed-data " << *cfg.seed_data << "\n";
}

int cmd_encode(const ConfigFlags& flags, const std::string& input, const std::string& output,
               const std::string& loss_csv) {
  RunConfig cfg = flags.resolve();
  const Shape shape = load_shape(input);
  const PreparedInput in = prepare_input(shape, cfg);
  announce_seeds(cfg);
  if (flags.print_config) std::cout << to_text(cfg);
  const EncodeOutput enc = encode_shape(in, cfg, cfg.width, cfg.bitwidth);
  write_compressed(output, enc.geometry);
  std::cout << "geometry: " << output << " " << enc.geometry.total_size_bytes() << " bytes\n";
  if (enc.attributes) {
    const auto ap = attribute_path(output);
    write_compressed(ap, *enc.attributes);
    std::cout << "attributes: " << ap.string() << " " << enc.attributes->total_size_bytes() << " bytes\n";
  }
  if (!loss_csv.empty()) {
    std::ofstream out(loss_csv);
    out << "epoch,mean_loss\n" << std::setprecision(12);
    for (std::size_t e = 0; e < enc.loss_history.size(); ++e) out << e << ',' << enc.loss_history[e] << '\n';
  }
  std::cout << "total_bytes " << enc.total_bytes() << "\nencode_seconds " << enc.seconds << "\n";
  return 0;
}

int cmd_decode(const ConfigFlags& flags, const std::string& input, const std::string& output, bool force_cloud) {
  const RunConfig cfg = flags.resolve();
  if (flags.print_config) std::cout << to_text(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  Normalization norm;
  const FieldModel geo = decode_stream(read_compressed(input), cfg, &norm);
  std::optional<FieldModel> attr;
  if (const auto ap = attribute_path(input); std::filesystem::exists(ap)) attr = decode_stream(read_compressed(ap), cfg);

  const TriMesh mesh = decode_mesh(geo, cfg.r_mc);
  if (mesh.empty()) throw Error(ErrorKind::EmptySurface, "decoded isosurface is empty: shape lost at this rate");
  const auto fmt = format_from_extension(output);
  const bool cloud = force_cloud || fmt == FileFormat::Xyz;
  if (cloud) {
    const PointCloud pc = decode_cloud(mesh, geo, attr ? &*attr : nullptr, cfg.n_points, norm, kDecodeSeed);
    if (fmt == FileFormat::Xyz) save_xyz(output, pc);
    else if (fmt == FileFormat::Obj) throw Error(ErrorKind::Config, "point clouds are written as .ply or .xyz");
    else save_ply(output, pc, fmt != FileFormat::PlyAscii);
    std::cout << "points " << pc.size() << "\n";
  } else {
    TriMesh out = mesh;
    denormalize(out, norm);
    if (fmt == FileFormat::Obj) save_obj(output, out);
    else save_ply(output, out, fmt != FileFormat::PlyAscii);
    std::cout << "vertices " << out.vertices.size() << " triangles " << out.triangles.size() << "\n";
  }
  std::cout << "decode_seconds " << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
            << "\n";
  return 0;
}

int cmd_eval(const ConfigFlags& flags, const std::string& gt_path, const std::string& rec_path) {
  RunConfig cfg = flags.resolve();
  if (!cfg.seed_data) cfg.seed_data = 0;
  Shape gt = load_shape(gt_path);
  Shape rec = load_shape(rec_path);
  const Normalization norm = normalize(gt);
  if (auto* m = std::get_if<TriMesh>(&rec)) {
    for (auto& v : m->vertices) v = norm.apply(v);
  } else {
    for (auto& p : std::get<PointCloud>(rec).points) p = norm.apply(p);
  }
  const PointCloud a = reference_cloud(gt, cfg.n_points, mix_seed(*cfg.seed_data, 0xe7a1));
  const PointCloud b = reference_cloud(rec, cfg.n_points, mix_seed(*cfg.seed_data, 0xe7a1));
  std::cout << std::setprecision(9) << "cd,psnr\n" << chamfer(a, b) << ',';
  if (a.has_colors() && b.has_colors()) std::cout << attribute_psnr(a, b);
  std::cout << "\n";
  return 0;
}

int cmd_sweep(const ConfigFlags& flags, const std::string& input, const std::string& csv_path,
              const std::string& svg_path, const std::vector<std::string>& ablate, bool parallel) {
  RunConfig cfg = flags.resolve();
  if (!ablate.empty()) {
    if (ablate.size() != 2 || ablate[0] != "bitwidth")
      throw Error(ErrorKind::Config, "--ablate expects: bitwidth <list>");
    cfg.bitwidths = parse_int_list(ablate[1]);
    validate(cfg);
  }
  const Shape shape = load_shape(input);
  validate_for_input(cfg, shape);
  announce_seeds(cfg);
  if (flags.print_config) std::cout << to_text(cfg);
  const auto pts = rd_sweep(shape, cfg, parallel);
  const std::string csv = rd_csv(pts);
  if (!csv_path.empty()) std::ofstream(csv_path) << csv;
  std::cout << csv;
  if (!svg_path.empty()) std::ofstream(svg_path) << rd_svg(pts);
  std::size_t ok = 0;
  for (const auto& p : pts) {
    if (p.ok) ++ok;
    else std::cerr << "width " << p.width << " b " << p.bitwidth << " failed: " << p.error << "\n";
  }
  if (ok == 0) throw Error(ErrorKind::AllFailed, "every sweep point failed");
  return 0;
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Parse:
    case ErrorKind::Degenerate: return 1;
    case ErrorKind::Config:
    case ErrorKind::Unsupported:
    case ErrorKind::Precondition: return 2;
    case ErrorKind::Divergence: return 3;
    case ErrorKind::Corrupt: return 4;
    case ErrorKind::EmptySurface: return 5;
    case ErrorKind::AllFailed: return 6;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nf3d: neural-field point cloud and mesh codec"};
  app.require_subcommand(1);

  ConfigFlags enc_flags, dec_flags, eval_flags, sweep_flags;
  std::string enc_in, enc_out, loss_csv, dec_in, dec_out, gt, rec, sw_in, sw_csv, sw_svg;
  std::vector<std::string> ablate;
  bool force_cloud = false, parallel = false;

  auto* enc = app.add_subcommand("encode", "compress a mesh or point cloud");
  enc->add_option("input", enc_in, "OBJ, PLY or XYZ input")->required();
  enc->add_option("output", enc_out, ".nf3d output")->required();
  enc->add_option("--loss-csv", loss_csv, "write the per-epoch training loss here");
  enc_flags.add(enc);
  bind_model_flags(enc_flags, enc);

  auto* dec = app.add_subcommand("decode", "reconstruct a mesh or point cloud");
  dec->add_option("input", dec_in, ".nf3d input")->required();
  dec->add_option("output", dec_out, "OBJ/PLY mesh, or PLY/XYZ point cloud")->required();
  dec->add_flag("--cloud", force_cloud, "write a point cloud instead of a mesh");
  dec_flags.add(dec);
  dec_flags.bind(dec, "--r-mc", "r_mc", "marching-cubes resolution");
  dec_flags.bind(dec, "--head", "head", "default | abs | relu | identity");
  dec->add_option_function<std::string>(
      "--points",
      [&](const std::string& v) {
        dec_flags.flags.emplace_back("n_points", v);
        force_cloud = true;
      },
      "sample this many points (implies --cloud)");

  auto* ev = app.add_subcommand("eval", "Chamfer distance and color PSNR");
  ev->add_option("ground_truth", gt)->required();
  ev->add_option("reconstruction", rec)->required();
  eval_flags.add(ev);
  eval_flags.bind(ev, "--points", "n_points", "samples drawn from mesh inputs");
  eval_flags.bind(ev, "--seed-data", "seed_data", "sampling seed for mesh inputs");

  auto* sw = app.add_subcommand("sweep", "rate-distortion sweep over widths");
  sw->add_option("input", sw_in)->required();
  sw->add_option("--csv", sw_csv, "write the RD table here");
  sw->add_option("--svg", sw_svg, "write an RD scatter plot here");
  sw->add_option("--ablate", ablate, "bitwidth <list>: sweep bitwidths at fixed width")->expected(2);
  sw->add_flag("--parallel", parallel, "run operating points concurrently");
  sweep_flags.add(sw);
  bind_model_flags(sweep_flags, sw);
  sweep_flags.bind(sw, "--widths", "widths", "comma-separated widths");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*enc) return cmd_encode(enc_flags, enc_in, enc_out, loss_csv);
    if (*dec) return cmd_decode(dec_flags, dec_in, dec_out, force_cloud);
    if (*ev) return cmd_eval(eval_flags, gt, rec);
    if (*sw) return cmd_sweep(sweep_flags, sw_in, sw_csv, sw_svg, ablate, parallel);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
