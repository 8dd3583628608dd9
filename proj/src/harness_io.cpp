#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "imprg/harness.hpp"

namespace imprg::harness {

using nlohmann::json;

const char* const kTraceCsvHeader =
    "iter,density,final_loss,m_frac_layer0,m_frac_layer1,m_frac_layer2,"
    "surv_layer0,surv_layer1,surv_layer2";
const char* const kTransferCsvHeader =
    "source_iter,density,transferred_loss,native_loss,winning_flag";

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const char* what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(std::string("bad ") + what + " field: " + s);
  }
}

std::int64_t parse_int(const std::string& s, const char* what) {
  try {
    std::size_t pos = 0;
    const std::int64_t v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(std::string("bad ") + what + " field: " + s);
  }
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

std::string encode_bits_hex(const std::vector<std::uint8_t>& bits) {
  std::string hex;
  hex.reserve((bits.size() + 7) / 8 * 2);
  for (std::size_t base = 0; base < bits.size(); base += 8) {
    unsigned byte = 0;
    for (std::size_t j = 0; j < 8 && base + j < bits.size(); ++j) {
      if (bits[base + j]) byte |= 1u << j;
    }
    char buf[3];
    std::snprintf(buf, sizeof(buf), "%02x", byte);
    hex += buf;
  }
  return hex;
}

std::vector<std::uint8_t> decode_bits_hex(const std::string& hex,
                                          std::size_t n_bits) {
  if (hex.size() != (n_bits + 7) / 8 * 2) {
    throw std::runtime_error("mask bit string has the wrong length");
  }
  std::vector<std::uint8_t> bits(n_bits, 0);
  for (std::size_t byte_idx = 0; byte_idx * 2 < hex.size(); ++byte_idx) {
    const std::string byte_hex = hex.substr(byte_idx * 2, 2);
    unsigned byte = 0;
    if (std::sscanf(byte_hex.c_str(), "%02x", &byte) != 1) {
      throw std::runtime_error("mask bit string is not hex");
    }
    for (std::size_t j = 0; j < 8; ++j) {
      const std::size_t bit = byte_idx * 8 + j;
      if (bit < n_bits) bits[bit] = (byte >> j) & 1u;
    }
  }
  return bits;
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write file: " + path.string());
  }
  out << text;
  if (!out) {
    throw std::runtime_error("write failed: " + path.string());
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open file: " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void write_trace_csv(const std::filesystem::path& path,
                     const imp::ImpTrace& trace) {
  for (const auto& rec : trace.records) {
    if (rec.layer_m_frac.size() != 3 || rec.layer_surviving.size() != 3) {
      throw std::invalid_argument(
          "trace csv schema carries exactly three layers");
    }
  }
  std::string text = kTraceCsvHeader;
  text += '\n';
  for (const auto& rec : trace.records) {
    text += std::to_string(rec.iter);
    text += ',';
    text += fmt_double(rec.density);
    text += ',';
    text += fmt_double(rec.final_loss);
    for (int l = 0; l < 3; ++l) {
      text += ',';
      text += fmt_double(rec.layer_m_frac[l]);
    }
    for (int l = 0; l < 3; ++l) {
      text += ',';
      text += std::to_string(rec.layer_surviving[l]);
    }
    text += '\n';
  }
  write_text_file(path, text);
}

imp::ImpTrace read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open trace csv: " + path.string());
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("trace csv is empty: " + path.string());
  }
  if (strip_cr(line) != kTraceCsvHeader) {
    throw std::runtime_error("trace csv header mismatch (schema version 1): " +
                             path.string());
  }
  imp::ImpTrace trace;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_line(line);
    if (fields.size() != 9) {
      throw std::runtime_error("trace csv line " + std::to_string(lineno) +
                               ": expected 9 fields");
    }
    imp::ImpRecord rec;
    rec.iter = static_cast<int>(parse_int(fields[0], "iter"));
    rec.density = parse_double(fields[1], "density");
    rec.final_loss = parse_double(fields[2], "final_loss");
    rec.layer_m_frac = {parse_double(fields[3], "m_frac_layer0"),
                        parse_double(fields[4], "m_frac_layer1"),
                        parse_double(fields[5], "m_frac_layer2")};
    rec.layer_surviving = {parse_int(fields[6], "surv_layer0"),
                           parse_int(fields[7], "surv_layer1"),
                           parse_int(fields[8], "surv_layer2")};
    trace.records.push_back(std::move(rec));
  }
  return trace;
}

void write_masks_json(const std::filesystem::path& path,
                      const imp::ImpTrace& trace) {
  json doc;
  doc["format_version"] = kFormatVersion;
  json layers = json::array();
  if (trace.records.empty() || trace.records.front().mask.bits.empty()) {
    throw std::invalid_argument("trace carries no masks to store");
  }
  for (const auto& shape : trace.records.front().mask.shapes) {
    layers.push_back({{"rows", shape.rows}, {"cols", shape.cols}});
  }
  doc["layers"] = layers;
  json iters = json::array();
  for (const auto& rec : trace.records) {
    iters.push_back(
        {{"iter", rec.iter}, {"bits", encode_bits_hex(rec.mask.bits)}});
  }
  doc["iters"] = iters;
  write_text_file(path, doc.dump(2) + "\n");
}

void read_masks_json(const std::filesystem::path& path, imp::ImpTrace& trace) {
  const json doc = json::parse(read_text_file(path));
  if (doc.at("format_version").get<int>() != kFormatVersion) {
    throw std::runtime_error("masks json: unsupported format version");
  }
  std::vector<nn_core::LayerShape> shapes;
  for (const auto& layer : doc.at("layers")) {
    shapes.push_back({layer.at("rows").get<int>(), layer.at("cols").get<int>()});
  }
  std::size_t n_bits = 0;
  for (const auto& s : shapes) {
    n_bits += static_cast<std::size_t>(s.rows) * s.cols;
  }
  const auto& iters = doc.at("iters");
  if (iters.size() != trace.records.size()) {
    throw std::runtime_error("masks json does not match the trace length");
  }
  for (std::size_t i = 0; i < trace.records.size(); ++i) {
    const auto& entry = iters[i];
    if (entry.at("iter").get<int>() != trace.records[i].iter) {
      throw std::runtime_error("masks json iteration mismatch");
    }
    nn_core::Mask mask;
    mask.shapes = shapes;
    mask.bits = decode_bits_hex(entry.at("bits").get<std::string>(), n_bits);
    mask.validate();
    trace.records[i].mask = std::move(mask);
  }
}

namespace {

json config_to_json(const ExperimentConfig& config) {
  json doc;
  doc["task"] = hnn_tasks::task_name(config.task.task);
  doc["task_t0"] = config.task.t0;
  doc["task_t_max"] = config.task.t_max;
  doc["task_ic"] = std::vector<double>(
      config.task.initial_conditions.begin(),
      config.task.initial_conditions.begin() + config.task.arity());
  doc["task_ic_constraint"] = config.task.ic_constraint;
  doc["net_hidden"] = config.net.hidden_dims;
  doc["net_activation"] = nn_core::activation_name(config.net.activation);
  doc["imp_x"] = config.imp.x;
  doc["imp_iterations"] = config.imp.iterations;
  doc["imp_scope"] = config.imp.scope.to_string();
  doc["train_epochs"] = config.imp.train.epochs;
  doc["train_lr"] = config.imp.train.lr;
  doc["train_k_points"] = config.imp.train.k_points;
  doc["train_divergence_threshold"] = config.imp.train.divergence_threshold;
  doc["train_backend"] = kernels::backend_name(config.imp.train.backend);
  doc["runs"] = config.runs;
  doc["seed"] = config.base_seed;
  doc["out_dir"] = config.out_dir.string();
  doc["analysis_power_law"] = config.analysis.power_law;
  doc["analysis_sigma"] = config.analysis.sigma;
  doc["analysis_tickets"] = config.analysis.tickets;
  doc["analysis_ticket_tolerance"] = config.analysis.ticket_tolerance;
  doc["analysis_region_tolerance"] = config.analysis.region_tolerance;
  if (config.analysis.region_d_l.has_value()) {
    doc["analysis_region_dl"] = *config.analysis.region_d_l;
    doc["analysis_region_dc"] = *config.analysis.region_d_c;
  }
  return doc;
}

ExperimentConfig config_from_json(const json& doc) {
  ExperimentConfig config;
  const hnn_tasks::TaskId task_id =
      hnn_tasks::parse_task(doc.at("task").get<std::string>());
  config.task = task_id == hnn_tasks::TaskId::kNlOscillator
                    ? hnn_tasks::make_nl_task()
                    : hnn_tasks::make_hh_task();
  config.task.t0 = doc.at("task_t0").get<double>();
  config.task.t_max = doc.at("task_t_max").get<double>();
  config.task.ic_constraint = doc.at("task_ic_constraint").get<bool>();
  const auto ic = doc.at("task_ic").get<std::vector<double>>();
  config.task.initial_conditions = {0.0, 0.0, 0.0, 0.0};
  std::copy(ic.begin(), ic.end(), config.task.initial_conditions.begin());
  config.net.input_dim = 1;
  config.net.hidden_dims = doc.at("net_hidden").get<std::vector<int>>();
  config.net.output_dim = config.task.arity();
  config.net.activation =
      nn_core::parse_activation(doc.at("net_activation").get<std::string>());
  config.imp.x = doc.at("imp_x").get<double>();
  config.imp.iterations = doc.at("imp_iterations").get<int>();
  config.imp.scope =
      imp::PruneScope::parse(doc.at("imp_scope").get<std::string>());
  config.imp.train.epochs = doc.at("train_epochs").get<int>();
  config.imp.train.lr = doc.at("train_lr").get<double>();
  config.imp.train.k_points = doc.at("train_k_points").get<int>();
  config.imp.train.divergence_threshold =
      doc.at("train_divergence_threshold").get<double>();
  config.imp.train.backend = kernels::parse_backend(
      doc.at("train_backend").get<std::string>().c_str());
  config.runs = doc.at("runs").get<int>();
  config.base_seed = doc.at("seed").get<std::uint64_t>();
  config.imp.seed = config.base_seed;
  config.out_dir = doc.at("out_dir").get<std::string>();
  config.analysis.power_law = doc.at("analysis_power_law").get<bool>();
  config.analysis.sigma = doc.at("analysis_sigma").get<bool>();
  config.analysis.tickets = doc.at("analysis_tickets").get<bool>();
  config.analysis.ticket_tolerance =
      doc.at("analysis_ticket_tolerance").get<double>();
  config.analysis.region_tolerance =
      doc.at("analysis_region_tolerance").get<double>();
  if (doc.contains("analysis_region_dl")) {
    config.analysis.region_d_l = doc.at("analysis_region_dl").get<double>();
    config.analysis.region_d_c = doc.at("analysis_region_dc").get<double>();
  }
  return config;
}

}  // namespace

void write_config_echo(const std::filesystem::path& path,
                       const ExperimentConfig& config,
                       const imp::ImpTrace& trace) {
  json doc;
  doc["format_version"] = kFormatVersion;
  doc["config_echo"] = config_to_json(config);
  json run;
  run["seed"] = trace.seed;
  run["status"] = imp::run_status_name(trace.status);
  run["fail_iter"] = trace.fail_iter;
  run["fail_detail"] = trace.fail_detail;
  run["init_fingerprint"] = trace.init_fingerprint;
  doc["run"] = run;
  write_text_file(path, doc.dump(2) + "\n");
}

void write_experiment_echo(const std::filesystem::path& path,
                           const ExperimentConfig& config) {
  json doc;
  doc["format_version"] = kFormatVersion;
  doc["config_echo"] = config_to_json(config);
  write_text_file(path, doc.dump(2) + "\n");
}

ExperimentConfig read_config_echo(const std::filesystem::path& path,
                                  imp::ImpTrace& trace) {
  const json doc = json::parse(read_text_file(path));
  if (doc.at("format_version").get<int>() != kFormatVersion) {
    throw std::runtime_error("config echo: unsupported format version");
  }
  ExperimentConfig config = config_from_json(doc.at("config_echo"));
  trace.task = hnn_tasks::task_name(config.task.task);
  trace.x = config.imp.x;
  trace.iterations = config.imp.iterations;
  trace.scope = config.imp.scope;
  trace.seed = config.base_seed;
  if (doc.contains("run")) {
    const auto& run = doc.at("run");
    trace.seed = run.at("seed").get<std::uint64_t>();
    trace.status = imp::parse_run_status(run.at("status").get<std::string>());
    trace.fail_iter = run.at("fail_iter").get<int>();
    trace.fail_detail = run.at("fail_detail").get<int>();
    trace.init_fingerprint = run.at("init_fingerprint").get<std::string>();
  }
  return config;
}

LoadedRun load_run(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  LoadedRun out;
  fs::path trace_path = dir / "trace_mean.csv";
  if (!fs::exists(trace_path)) trace_path = dir / "trace.csv";
  if (!fs::exists(trace_path)) {
    throw std::runtime_error("no trace csv in " + dir.string());
  }
  out.trace = read_trace_csv(trace_path);
  const fs::path echo = dir / "config_echo.json";
  if (!fs::exists(echo)) {
    throw std::runtime_error("no config_echo.json in " + dir.string());
  }
  out.config = read_config_echo(echo, out.trace);
  const fs::path masks = dir / "masks.json";
  if (fs::exists(masks)) {
    read_masks_json(masks, out.trace);
    out.has_masks = true;
  }
  return out;
}

void write_transfer_csv(const std::filesystem::path& path,
                        const transfer::TransferTable& table) {
  std::string text = kTransferCsvHeader;
  text += '\n';
  for (const auto& row : table.rows) {
    text += std::to_string(row.source_iter);
    text += ',';
    text += fmt_double(row.density);
    text += ',';
    text += fmt_double(row.transferred_loss);
    text += ',';
    text += fmt_double(row.native_loss);
    text += ',';
    text += row.winning ? '1' : '0';
    text += '\n';
  }
  write_text_file(path, text);
}

transfer::TransferTable read_transfer_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open transfer csv: " + path.string());
  }
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != kTransferCsvHeader) {
    throw std::runtime_error("transfer csv header mismatch: " + path.string());
  }
  transfer::TransferTable table;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_line(line);
    if (fields.size() != 5) {
      throw std::runtime_error("transfer csv line " + std::to_string(lineno) +
                               ": expected 5 fields");
    }
    transfer::TransferRow row;
    row.source_iter = static_cast<int>(parse_int(fields[0], "source_iter"));
    row.density = parse_double(fields[1], "density");
    row.transferred_loss = parse_double(fields[2], "transferred_loss");
    row.native_loss = parse_double(fields[3], "native_loss");
    row.winning = parse_int(fields[4], "winning_flag") != 0;
    row.failed = std::isnan(row.transferred_loss);
    table.rows.push_back(row);
  }
  return table;
}

namespace {

json summary_to_json_impl(const Summary& summary) {
  json doc;
  doc["format_version"] = summary.format_version;
  doc["n_runs"] = summary.n_runs;
  doc["n_runs_completed"] = summary.n_runs_completed;
  doc["notes"] = summary.notes;
  if (summary.power_law.has_value()) {
    const auto& fit = *summary.power_law;
    doc["power_law"] = {{"d_l", fit.region.d_l},     {"d_c", fit.region.d_c},
                        {"gamma", fit.gamma},        {"r2", fit.r2},
                        {"slope", fit.slope},        {"intercept", fit.intercept},
                        {"slope_stderr", fit.slope_stderr},
                        {"n_points", fit.n_points}};
  } else {
    doc["power_law"] = nullptr;
  }
  if (summary.sigma.has_value()) {
    json rows = json::array();
    for (const auto& row : summary.sigma->rows) {
      rows.push_back({{"layer", row.layer},
                      {"lambda", row.lambda},
                      {"stderr", row.stderr_},
                      {"sigma", row.sigma},
                      {"class", rg_analysis::direction_name(row.direction)}});
    }
    doc["sigma"] = {{"x", summary.sigma->x},
                    {"base", summary.sigma->base},
                    {"marginal_tol", summary.sigma->marginal_tol},
                    {"rows", rows}};
  } else {
    doc["sigma"] = nullptr;
  }
  if (summary.tickets.has_value()) {
    json rows = json::array();
    for (const auto& t : *summary.tickets) {
      rows.push_back({{"iter", t.iter}, {"density", t.density}});
    }
    doc["tickets"] = rows;
  } else {
    doc["tickets"] = nullptr;
  }
  return doc;
}

rg_analysis::Direction parse_direction(const std::string& name) {
  if (name == "relevant") return rg_analysis::Direction::kRelevant;
  if (name == "irrelevant") return rg_analysis::Direction::kIrrelevant;
  if (name == "marginal") return rg_analysis::Direction::kMarginal;
  throw std::runtime_error("unknown direction class: " + name);
}

}  // namespace

std::string summary_to_json(const Summary& summary,
                            const ExperimentConfig& config) {
  json doc = summary_to_json_impl(summary);
  doc["config_echo"] = config_to_json(config);
  return doc.dump(2) + "\n";
}

void write_summary_json(const std::filesystem::path& path,
                        const Summary& summary,
                        const ExperimentConfig& config) {
  write_text_file(path, summary_to_json(summary, config));
}

Summary read_summary_json(const std::filesystem::path& path) {
  const json doc = json::parse(read_text_file(path));
  Summary summary;
  summary.format_version = doc.at("format_version").get<int>();
  if (summary.format_version != kFormatVersion) {
    throw std::runtime_error("summary json: unsupported format version");
  }
  summary.n_runs = doc.at("n_runs").get<int>();
  summary.n_runs_completed = doc.at("n_runs_completed").get<int>();
  summary.notes = doc.at("notes").get<std::string>();
  if (!doc.at("power_law").is_null()) {
    const auto& fit_doc = doc.at("power_law");
    rg_analysis::PowerLawFit fit;
    fit.region.d_l = fit_doc.at("d_l").get<double>();
    fit.region.d_c = fit_doc.at("d_c").get<double>();
    fit.gamma = fit_doc.at("gamma").get<double>();
    fit.r2 = fit_doc.at("r2").get<double>();
    fit.slope = fit_doc.at("slope").get<double>();
    fit.intercept = fit_doc.at("intercept").get<double>();
    fit.slope_stderr = fit_doc.at("slope_stderr").get<double>();
    fit.n_points = fit_doc.at("n_points").get<int>();
    summary.power_law = fit;
  }
  if (!doc.at("sigma").is_null()) {
    const auto& sigma_doc = doc.at("sigma");
    rg_analysis::SigmaReport report;
    report.x = sigma_doc.at("x").get<double>();
    report.base = sigma_doc.at("base").get<double>();
    report.marginal_tol = sigma_doc.at("marginal_tol").get<double>();
    for (const auto& row_doc : sigma_doc.at("rows")) {
      rg_analysis::SigmaRow row;
      row.layer = row_doc.at("layer").get<int>();
      row.lambda = row_doc.at("lambda").get<double>();
      row.stderr_ = row_doc.at("stderr").get<double>();
      row.sigma = row_doc.at("sigma").get<double>();
      row.direction = parse_direction(row_doc.at("class").get<std::string>());
      report.rows.push_back(row);
    }
    summary.sigma = report;
  }
  if (!doc.at("tickets").is_null()) {
    std::vector<imp::Ticket> tickets;
    for (const auto& t : doc.at("tickets")) {
      tickets.push_back(
          {t.at("iter").get<int>(), t.at("density").get<double>()});
    }
    summary.tickets = tickets;
  }
  return summary;
}

}  // namespace imprg::harness
