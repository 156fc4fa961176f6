#include "ppc/io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ppc/constants.hpp"
#include "ppc/errors.hpp"

namespace ppc {

namespace {

using nlohmann::json;

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw io_error(std::string("json parse: ") + e.what());
  }
}

double num(const json& j, const char* key) {
  try {
    return j.at(key).get<double>();
  } catch (const json::exception& e) {
    throw io_error(std::string("json field '") + key + "': " + e.what());
  }
}

json poly_to_json(const ArcPoly& p) {
  json j;
  j["ss"] = p.x_ss / two_pi;
  j["x2"] = p.x2 / two_pi;
  j["x4"] = p.x4 / two_pi;
  j["x6"] = p.x6 / two_pi;
  return j;
}

ArcPoly poly_from_json(const json& j) {
  ArcPoly p;
  p.x_ss = two_pi * num(j, "ss");
  p.x2 = two_pi * num(j, "x2");
  p.x4 = two_pi * num(j, "x4");
  p.x6 = two_pi * num(j, "x6");
  return p;
}

json background_to_json(const BackgroundModel& b) {
  json j;
  j["a0"] = b.a0;
  j["a1"] = b.a1;
  j["a2"] = b.a2;
  j["phi0"] = b.phi0;
  j["phi1"] = b.phi1;
  j["theta"] = b.theta;
  return j;
}

BackgroundModel background_from_json(const json& j) {
  BackgroundModel b;
  b.a0 = num(j, "a0");
  b.a1 = num(j, "a1");
  b.a2 = num(j, "a2");
  b.phi0 = num(j, "phi0");
  b.phi1 = num(j, "phi1");
  b.theta = num(j, "theta");
  return b;
}

json network_to_json_obj(const CircuitNetwork& net) {
  json j;
  j["i0"] = net.squid.i0;
  j["l_loop"] = net.squid.l_loop;
  j["l_lin"] = net.squid.l_lin;
  j["l1"] = net.l1;
  j["l2"] = net.l2;
  j["c"] = net.c;
  j["c_c"] = net.c_c;
  j["c0"] = net.c0;
  j["c_c0"] = net.c_c0;
  j["z0"] = net.z0;
  if (net.l_hf_bare) j["l_hf_bare"] = *net.l_hf_bare;
  if (net.l_lf_bare) j["l_lf_bare"] = *net.l_lf_bare;
  return j;
}

CircuitNetwork network_from_json_obj(const json& j) {
  CircuitNetwork net;
  net.squid.i0 = num(j, "i0");
  net.squid.l_loop = num(j, "l_loop");
  net.squid.l_lin = num(j, "l_lin");
  net.l1 = num(j, "l1");
  net.l2 = num(j, "l2");
  net.c = num(j, "c");
  net.c_c = num(j, "c_c");
  net.c0 = num(j, "c0");
  net.c_c0 = num(j, "c_c0");
  net.z0 = num(j, "z0");
  if (j.contains("l_hf_bare")) net.l_hf_bare = num(j, "l_hf_bare");
  if (j.contains("l_lf_bare")) net.l_lf_bare = num(j, "l_lf_bare");
  return net;
}

json arcs_to_json_obj(const ArcModel& arc) {
  json j;
  j["kappa_int_hz"] = poly_to_json(arc.kappa_int);
  j["kappa_ext_hz"] = poly_to_json(arc.kappa_ext);
  j["gamma_int_hz"] = poly_to_json(arc.gamma_int);
  j["gamma_ext_hz"] = arc.gamma_ext / two_pi;
  return j;
}

ArcModel arcs_from_json_obj(const json& j) {
  ArcModel arc;
  arc.kappa_int = poly_from_json(j.at("kappa_int_hz"));
  arc.kappa_ext = poly_from_json(j.at("kappa_ext_hz"));
  arc.gamma_int = poly_from_json(j.at("gamma_int_hz"));
  arc.gamma_ext = two_pi * num(j, "gamma_ext_hz");
  return arc;
}

} // namespace

std::string format_double(double v) {
  char buf[40];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  if (ec != std::errc{}) throw io_error("number formatting failed");
  return std::string(buf, p);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw io_error("read failed on " + path);
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open " + path + " for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw io_error("write failed on " + path);
}

ComplexTrace read_trace_csv(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::size_t lineno = 0;
  ComplexTrace t;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1) {
      if (line != "freq_hz,re,im") throw parse_error("expected header freq_hz,re,im", lineno);
      continue;
    }
    double v[3];
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (int k = 0; k < 3; ++k) {
      auto [next, ec] = std::from_chars(p, end, v[k]);
      if (ec != std::errc{}) throw parse_error("malformed number", lineno);
      p = next;
      if (k < 2) {
        if (p == end || *p != ',') throw parse_error("expected comma", lineno);
        ++p;
      }
    }
    if (p != end) throw parse_error("trailing characters", lineno);
    t.freq_hz.push_back(v[0]);
    t.s.emplace_back(v[1], v[2]);
  }
  t.validate();
  return t;
}

void write_trace_csv(const std::string& path, const ComplexTrace& trace) {
  std::string out = "freq_hz,re,im\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    out += format_double(trace.freq_hz[i]);
    out += ',';
    out += format_double(trace.s[i].real());
    out += ',';
    out += format_double(trace.s[i].imag());
    out += '\n';
  }
  write_text_file(path, out);
}

std::string backaction_csv(const std::vector<BackactionPoint>& points) {
  std::string out = "omega_p_hz,n_c,gamma_pp_hz,domega_pp_hz,gamma_eff_hz,omega_eff_hz,unstable\n";
  for (const BackactionPoint& p : points) {
    out += format_double(p.omega_p / two_pi);
    out += ',';
    out += format_double(p.n_c);
    out += ',';
    out += format_double(p.gamma_pp / two_pi);
    out += ',';
    out += format_double(p.domega_pp / two_pi);
    out += ',';
    out += format_double(p.gamma_eff / two_pi);
    out += ',';
    out += format_double(p.omega_eff / two_pi);
    out += ',';
    out += p.unstable ? '1' : '0';
    out += '\n';
  }
  return out;
}

std::string to_json(const CircuitNetwork& net) { return network_to_json_obj(net).dump(2) + "\n"; }

CircuitNetwork network_from_json(const std::string& text) {
  return network_from_json_obj(parse_json(text));
}

std::string to_json(const ArcModel& arc) { return arcs_to_json_obj(arc).dump(2) + "\n"; }

ArcModel arc_model_from_json(const std::string& text) {
  try {
    return arcs_from_json_obj(parse_json(text));
  } catch (const json::exception& e) {
    throw io_error(std::string("arc model json: ") + e.what());
  }
}

std::string to_json(const DeviceBundle& dev) {
  json j;
  j["network"] = network_to_json_obj(dev.net);
  j["arcs"] = arcs_to_json_obj(dev.arcs);
  json c;
  c["g0_omega_hz"] = dev.couplings.g0_omega / two_pi;
  c["g0_kappa_hz"] = dev.couplings.g0_kappa / two_pi;
  c["g0_kerr_hz"] = dev.couplings.g0_kerr / two_pi;
  c["g_nl1_hz"] = dev.couplings.g_nl1 / two_pi;
  c["g_nl2_hz"] = dev.couplings.g_nl2 / two_pi;
  c["g_nl3_hz"] = dev.couplings.g_nl3 / two_pi;
  c["g0_kappa_ext_hz"] = dev.couplings.g0_kappa_ext / two_pi;
  j["couplings"] = c;
  json n;
  n["kerr_hz"] = dev.nonlin.kerr / two_pi;
  n["kappa1_hz"] = dev.nonlin.kappa1 / two_pi;
  n["kappa2_hz"] = dev.nonlin.kappa2 / two_pi;
  n["kappa3_hz"] = dev.nonlin.kappa3 / two_pi;
  n["cross_kerr_hz"] = dev.nonlin.cross_kerr / two_pi;
  n["cross_kappa_hz"] = dev.nonlin.cross_kappa / two_pi;
  n["kerr_lf_hz"] = dev.nonlin.kerr_lf / two_pi;
  j["nonlinear"] = n;
  j["kappa0_pump_hz"] = dev.kappa0_pump / two_pi;
  j["gamma0_op_hz"] = dev.gamma0_op / two_pi;
  j["f_lf_op_hz"] = dev.omega_lf_op / two_pi;
  j["theta0"] = dev.theta0;
  j["background_hf"] = background_to_json(dev.background_hf);
  j["background_lf"] = background_to_json(dev.background_lf);
  j["attenuation_fghz"] = dev.attenuation.coeffs_fghz;
  j["phi_b_op"] = dev.phi_b_op;
  return j.dump(2) + "\n";
}

DeviceBundle bundle_from_json(const std::string& text) {
  json j = parse_json(text);
  DeviceBundle dev;
  try {
    dev.net = network_from_json_obj(j.at("network"));
    dev.arcs = arcs_from_json_obj(j.at("arcs"));
    const json& c = j.at("couplings");
    dev.couplings.g0_omega = two_pi * num(c, "g0_omega_hz");
    dev.couplings.g0_kappa = two_pi * num(c, "g0_kappa_hz");
    dev.couplings.g0_kerr = two_pi * num(c, "g0_kerr_hz");
    dev.couplings.g_nl1 = two_pi * num(c, "g_nl1_hz");
    dev.couplings.g_nl2 = two_pi * num(c, "g_nl2_hz");
    dev.couplings.g_nl3 = two_pi * num(c, "g_nl3_hz");
    dev.couplings.g0_kappa_ext = two_pi * num(c, "g0_kappa_ext_hz");
    const json& n = j.at("nonlinear");
    dev.nonlin.kerr = two_pi * num(n, "kerr_hz");
    dev.nonlin.kappa1 = two_pi * num(n, "kappa1_hz");
    dev.nonlin.kappa2 = two_pi * num(n, "kappa2_hz");
    dev.nonlin.kappa3 = two_pi * num(n, "kappa3_hz");
    dev.nonlin.cross_kerr = two_pi * num(n, "cross_kerr_hz");
    dev.nonlin.cross_kappa = two_pi * num(n, "cross_kappa_hz");
    dev.nonlin.kerr_lf = two_pi * num(n, "kerr_lf_hz");
    dev.kappa0_pump = two_pi * num(j, "kappa0_pump_hz");
    dev.gamma0_op = two_pi * num(j, "gamma0_op_hz");
    dev.omega_lf_op = two_pi * num(j, "f_lf_op_hz");
    dev.theta0 = num(j, "theta0");
    dev.background_hf = background_from_json(j.at("background_hf"));
    dev.background_lf = background_from_json(j.at("background_lf"));
    const json& a = j.at("attenuation_fghz");
    for (std::size_t k = 0; k < 5; ++k) dev.attenuation.coeffs_fghz[k] = a.at(k).get<double>();
    dev.phi_b_op = num(j, "phi_b_op");
  } catch (const json::exception& e) {
    throw io_error(std::string("device bundle json: ") + e.what());
  }
  return dev;
}

std::string to_json(const FitResult& fr) {
  json j;
  j["params"] = fr.params;
  j["stderrs"] = fr.stderrs;
  j["residual_rms"] = fr.residual_rms;
  j["converged"] = fr.converged;
  j["n_iter"] = fr.n_iter;
  j["degenerate"] = fr.degenerate;
  j["note"] = fr.note;
  return j.dump(2) + "\n";
}

FitResult fit_result_from_json(const std::string& text) {
  json j = parse_json(text);
  FitResult fr;
  try {
    fr.params = j.at("params").get<std::map<std::string, double>>();
    fr.stderrs = j.at("stderrs").get<std::map<std::string, double>>();
    fr.residual_rms = num(j, "residual_rms");
    fr.converged = j.at("converged").get<bool>();
    fr.n_iter = j.at("n_iter").get<int>();
    fr.degenerate = j.at("degenerate").get<bool>();
    fr.note = j.at("note").get<std::string>();
  } catch (const json::exception& e) {
    throw io_error(std::string("fit result json: ") + e.what());
  }
  return fr;
}

std::string to_json(const TraceMeta& meta) {
  json j;
  j["probe_power_dbm"] = meta.probe_power_dbm;
  if (meta.pump_freq_hz) j["pump_freq_hz"] = *meta.pump_freq_hz;
  if (meta.pump_power_dbm) j["pump_power_dbm"] = *meta.pump_power_dbm;
  if (meta.flux_phi0) j["flux_phi0"] = *meta.flux_phi0;
  j["kind"] = to_string(meta.kind);
  return j.dump(2) + "\n";
}

TraceMeta trace_meta_from_json(const std::string& text) {
  json j = parse_json(text);
  TraceMeta m;
  try {
    m.probe_power_dbm = num(j, "probe_power_dbm");
    if (j.contains("pump_freq_hz")) m.pump_freq_hz = num(j, "pump_freq_hz");
    if (j.contains("pump_power_dbm")) m.pump_power_dbm = num(j, "pump_power_dbm");
    if (j.contains("flux_phi0")) m.flux_phi0 = num(j, "flux_phi0");
    m.kind = trace_kind_from_string(j.at("kind").get<std::string>());
  } catch (const json::exception& e) {
    throw io_error(std::string("trace meta json: ") + e.what());
  }
  return m;
}

namespace {

struct TouchstoneOptions {
  double f_unit = 1.0; // multiplier to Hz
  std::string format = "RI";
  double z0 = 50.0;
};

TouchstoneOptions parse_option_line(const std::string& line, std::size_t lineno) {
  std::istringstream ss(line);
  std::string tok;
  ss >> tok; // '#'
  TouchstoneOptions o;
  bool saw_s = false;
  while (ss >> tok) {
    std::string up;
    for (char ch : tok) up += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    if (up == "HZ") o.f_unit = 1.0;
    else if (up == "KHZ") o.f_unit = 1e3;
    else if (up == "MHZ") o.f_unit = 1e6;
    else if (up == "GHZ") o.f_unit = 1e9;
    else if (up == "S") saw_s = true;
    else if (up == "RI" || up == "MA" || up == "DB") o.format = up;
    else if (up == "R") {
      if (!(ss >> o.z0)) throw parse_error("reference impedance missing", lineno);
    } else {
      throw parse_error("unrecognized option token '" + tok + "'", lineno);
    }
  }
  if (!saw_s) throw parse_error("only S-parameter files are supported", lineno);
  return o;
}

std::complex<double> decode_pair(double a, double b, const std::string& fmt) {
  if (fmt == "RI") return {a, b};
  double mag = fmt == "DB" ? std::pow(10.0, a / 20.0) : a;
  double ph = b * pi / 180.0;
  return std::polar(mag, ph);
}

} // namespace

ConvertResult convert_trace_file(const std::string& in_path, const std::string& out_csv_path) {
  std::string text = read_text_file(in_path);
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;

  ComplexTrace t;
  json meta;
  bool touchstone = false;
  bool csv_mode = false;
  TouchstoneOptions opt;

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t bang = line.find('!');
    if (bang != std::string::npos) line.erase(bang);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    if (!touchstone && !csv_mode) {
      if (line[line.find_first_not_of(" \t")] == '#') {
        opt = parse_option_line(line, lineno);
        touchstone = true;
        continue;
      }
      if (line == "freq_hz,re,im") {
        csv_mode = true;
        continue;
      }
      // Headerless numeric data is treated as touchstone RI in Hz.
      touchstone = true;
    }

    if (csv_mode) {
      double v[3];
      const char* p = line.data();
      const char* end = line.data() + line.size();
      for (int k = 0; k < 3; ++k) {
        auto [next, ec] = std::from_chars(p, end, v[k]);
        if (ec != std::errc{}) throw parse_error("malformed number", lineno);
        p = next;
        if (k < 2) {
          if (p == end || *p != ',') throw parse_error("expected comma", lineno);
          ++p;
        }
      }
      if (p != end) throw parse_error("trailing characters", lineno);
      t.freq_hz.push_back(v[0]);
      t.s.emplace_back(v[1], v[2]);
    } else {
      std::istringstream ls(line);
      double f, a, b;
      if (!(ls >> f >> a >> b)) throw parse_error("expected 'freq value value'", lineno);
      std::string rest;
      if (ls >> rest) throw parse_error("trailing characters", lineno);
      t.freq_hz.push_back(f * opt.f_unit);
      t.s.push_back(decode_pair(a, b, opt.format));
    }
  }

  if (t.size() == 0) throw parse_error("no data rows", lineno);
  try {
    t.validate();
  } catch (const error& e) {
    throw io_error(std::string("converted trace invalid: ") + e.what());
  }

  write_trace_csv(out_csv_path, t);

  meta["source"] = std::filesystem::path(in_path).filename().string();
  meta["source_format"] = csv_mode ? "csv" : "touchstone";
  meta["n_points"] = t.size();
  meta["f_min_hz"] = t.freq_hz.front();
  meta["f_max_hz"] = t.freq_hz.back();
  if (touchstone) {
    meta["z0"] = opt.z0;
    meta["value_format"] = opt.format;
  }

  std::filesystem::path mp(out_csv_path);
  mp.replace_extension(".meta.json");
  write_text_file(mp.string(), meta.dump(2) + "\n");
  return {out_csv_path, mp.string()};
}

} // namespace ppc
