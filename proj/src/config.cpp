// SPDX-License-Identifier: Apache-2.0
#include "vdsm/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace vdsm {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

long long parse_ll(const std::string& key, const std::string& v) {
    size_t pos = 0;
    long long x;
    try {
        x = std::stoll(v, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad integer for '" + key + "': " + v);
    }
    if (pos != v.size()) throw std::invalid_argument("config: bad integer for '" + key + "': " + v);
    return x;
}

int parse_int(const std::string& key, const std::string& v) { return static_cast<int>(parse_ll(key, v)); }

double parse_double(const std::string& key, const std::string& v) {
    size_t pos = 0;
    double x;
    try {
        x = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad number for '" + key + "': " + v);
    }
    if (pos != v.size()) throw std::invalid_argument("config: bad number for '" + key + "': " + v);
    return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("config: bad bool for '" + key + "': " + v);
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    if (trim(v).empty()) return out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_int(key, trim(item)));
    return out;
}

std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

std::string fmt_int_list(const std::vector<int>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(v[i]);
    }
    return s;
}

bool power_of_two(int x) { return x > 0 && (x & (x - 1)) == 0; }

int log2i(int x) {
    int n = 0;
    while ((1 << n) < x) ++n;
    return n;
}

}  // namespace

std::vector<int> Config::encoder_widths() const {
    if (!enc_widths.empty()) return enc_widths;
    const int n = std::max(1, log2i(frame_size) - 1);
    std::vector<int> w;
    for (int i = 0; i < n; ++i) w.push_back(std::min(16 << (i / 2), 64));
    return w;
}

std::vector<int> Config::decoder_widths() const {
    if (!dec_widths.empty()) return dec_widths;
    if (frame_size <= 4) return {};
    const int n = log2i(frame_size / 4);
    std::vector<int> w;
    for (int i = 0; i < n; ++i) w.push_back(std::max(48 >> i, 8));
    return w;
}

int Config::trunk_spatial() const {
    const int n = std::max(1, log2i(frame_size) - 1);
    return frame_size >> n;
}

void Config::validate() const {
    auto req = [](bool ok, const std::string& msg) {
        if (!ok) throw std::invalid_argument("config: " + msg);
    };
    req(kappa_z >= 1 && kappa_s >= 1 && kappa_d >= 1, "latent dims must be >= 1");
    req(n_experts == kappa_s || n_experts == 1, "n_experts must equal kappa_s (or 1 for the ablation)");
    req(frame_channels >= 1, "frame_channels must be >= 1");
    req(power_of_two(frame_size) && frame_size >= 2, "frame_size must be a power of two >= 2");
    req(feat_s >= 1, "feat_s must be >= 1");
    const int n_stages = std::max(1, log2i(frame_size) - 1);
    req(enc_widths.empty() || static_cast<int>(enc_widths.size()) == n_stages,
        "enc_widths must have one entry per downsampling stage (" + std::to_string(n_stages) + ")");
    const int n_mid = frame_size <= 4 ? 0 : log2i(frame_size / 4);
    req(dec_widths.empty() || static_cast<int>(dec_widths.size()) == n_mid,
        "dec_widths must have one entry per intermediate upsampling stage (" + std::to_string(n_mid) + ")");
    req(rnn_hidden >= 1 && rnn_token_dim >= 1 && trans_hidden >= 1, "recurrent widths must be >= 1");
    req(seq_len >= 2, "seq_len must be >= 2");
    req(epochs_pretrain >= 0 && epochs_sequence >= 0, "epoch counts must be >= 0");
    req(batch_pretrain >= 1 && batch_sequence >= 1, "batch sizes must be >= 1");
    req(batches_per_epoch_pretrain >= 1 && batches_per_epoch_sequence >= 1, "batches per epoch must be >= 1");
    req(lr_pretrain > 0 && lr_sequence > 0, "learning rates must be > 0");
    req(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1, "adam betas must be in [0,1)");
    req(adam_eps > 0, "adam_eps must be > 0");
    req(grad_clip > 0, "grad_clip must be > 0");
    req(tau_min > 0 && tau_max >= tau_min, "tau range must satisfy 0 < tau_min <= tau_max");
    req(lambda_z_pre_start >= 0 && lambda_z_pre_end >= 0 && lambda_s_pre_start >= 0 && lambda_s_pre_end >= 0,
        "pretrain lambda endpoints must be >= 0");
    req(lambda_z_seq_start >= 0 && lambda_z_seq_end >= 0 && lambda_s_seq >= 0 && lambda_d >= 0,
        "sequence lambda values must be >= 0");
    req(dataset == "pendulum" || dataset == "shapes", "dataset must be pendulum or shapes");
    req(gen_count >= 1 && gen_colors >= 2 && gen_speeds >= 2 && gen_shapes >= 2 && gen_motions >= 2,
        "generator counts must be >= 2 (and gen_count >= 1)");
}

void Config::apply_kv(const std::string& key, const std::string& value) {
    const std::string v = trim(value);
    if (key == "kappa_z") kappa_z = parse_int(key, v);
    else if (key == "kappa_s") kappa_s = parse_int(key, v);
    else if (key == "kappa_d") kappa_d = parse_int(key, v);
    else if (key == "n_experts") n_experts = parse_int(key, v);
    else if (key == "frame_channels") frame_channels = parse_int(key, v);
    else if (key == "frame_size") frame_size = parse_int(key, v);
    else if (key == "enc_widths") enc_widths = parse_int_list(key, v);
    else if (key == "dec_widths") dec_widths = parse_int_list(key, v);
    else if (key == "feat_s") feat_s = parse_int(key, v);
    else if (key == "enc_blur") enc_blur = parse_bool(key, v);
    else if (key == "rnn_hidden") rnn_hidden = parse_int(key, v);
    else if (key == "rnn_token_dim") rnn_token_dim = parse_int(key, v);
    else if (key == "trans_hidden") trans_hidden = parse_int(key, v);
    else if (key == "seq_len") seq_len = parse_int(key, v);
    else if (key == "epochs_pretrain") epochs_pretrain = parse_int(key, v);
    else if (key == "epochs_sequence") epochs_sequence = parse_int(key, v);
    else if (key == "batch_pretrain") batch_pretrain = parse_int(key, v);
    else if (key == "batch_sequence") batch_sequence = parse_int(key, v);
    else if (key == "batches_per_epoch_pretrain") batches_per_epoch_pretrain = parse_int(key, v);
    else if (key == "batches_per_epoch_sequence") batches_per_epoch_sequence = parse_int(key, v);
    else if (key == "lr_pretrain") lr_pretrain = parse_double(key, v);
    else if (key == "lr_sequence") lr_sequence = parse_double(key, v);
    else if (key == "adam_beta1") adam_beta1 = parse_double(key, v);
    else if (key == "adam_beta2") adam_beta2 = parse_double(key, v);
    else if (key == "adam_eps") adam_eps = parse_double(key, v);
    else if (key == "grad_clip") grad_clip = parse_double(key, v);
    else if (key == "seed") seed = static_cast<unsigned long long>(parse_ll(key, v));
    else if (key == "lambda_z_pre_start") lambda_z_pre_start = parse_double(key, v);
    else if (key == "lambda_z_pre_end") lambda_z_pre_end = parse_double(key, v);
    else if (key == "lambda_s_pre_start") lambda_s_pre_start = parse_double(key, v);
    else if (key == "lambda_s_pre_end") lambda_s_pre_end = parse_double(key, v);
    else if (key == "lambda_z_seq_start") lambda_z_seq_start = parse_double(key, v);
    else if (key == "lambda_z_seq_end") lambda_z_seq_end = parse_double(key, v);
    else if (key == "lambda_s_seq") lambda_s_seq = parse_double(key, v);
    else if (key == "lambda_d") lambda_d = parse_double(key, v);
    else if (key == "tau_min") tau_min = parse_double(key, v);
    else if (key == "tau_max") tau_max = parse_double(key, v);
    else if (key == "dataset") dataset = v;
    else if (key == "gen_count") gen_count = parse_int(key, v);
    else if (key == "gen_colors") gen_colors = parse_int(key, v);
    else if (key == "gen_speeds") gen_speeds = parse_int(key, v);
    else if (key == "gen_shapes") gen_shapes = parse_int(key, v);
    else if (key == "gen_motions") gen_motions = parse_int(key, v);
    else throw std::invalid_argument("config: unknown key '" + key + "'");
}

std::string Config::serialize() const {
    std::ostringstream os;
    os << "kappa_z = " << kappa_z << "\n";
    os << "kappa_s = " << kappa_s << "\n";
    os << "kappa_d = " << kappa_d << "\n";
    os << "n_experts = " << n_experts << "\n";
    os << "frame_channels = " << frame_channels << "\n";
    os << "frame_size = " << frame_size << "\n";
    os << "enc_widths = " << fmt_int_list(enc_widths) << "\n";
    os << "dec_widths = " << fmt_int_list(dec_widths) << "\n";
    os << "feat_s = " << feat_s << "\n";
    os << "enc_blur = " << (enc_blur ? "true" : "false") << "\n";
    os << "rnn_hidden = " << rnn_hidden << "\n";
    os << "rnn_token_dim = " << rnn_token_dim << "\n";
    os << "trans_hidden = " << trans_hidden << "\n";
    os << "seq_len = " << seq_len << "\n";
    os << "epochs_pretrain = " << epochs_pretrain << "\n";
    os << "epochs_sequence = " << epochs_sequence << "\n";
    os << "batch_pretrain = " << batch_pretrain << "\n";
    os << "batch_sequence = " << batch_sequence << "\n";
    os << "batches_per_epoch_pretrain = " << batches_per_epoch_pretrain << "\n";
    os << "batches_per_epoch_sequence = " << batches_per_epoch_sequence << "\n";
    os << "lr_pretrain = " << fmt_double(lr_pretrain) << "\n";
    os << "lr_sequence = " << fmt_double(lr_sequence) << "\n";
    os << "adam_beta1 = " << fmt_double(adam_beta1) << "\n";
    os << "adam_beta2 = " << fmt_double(adam_beta2) << "\n";
    os << "adam_eps = " << fmt_double(adam_eps) << "\n";
    os << "grad_clip = " << fmt_double(grad_clip) << "\n";
    os << "seed = " << seed << "\n";
    os << "lambda_z_pre_start = " << fmt_double(lambda_z_pre_start) << "\n";
    os << "lambda_z_pre_end = " << fmt_double(lambda_z_pre_end) << "\n";
    os << "lambda_s_pre_start = " << fmt_double(lambda_s_pre_start) << "\n";
    os << "lambda_s_pre_end = " << fmt_double(lambda_s_pre_end) << "\n";
    os << "lambda_z_seq_start = " << fmt_double(lambda_z_seq_start) << "\n";
    os << "lambda_z_seq_end = " << fmt_double(lambda_z_seq_end) << "\n";
    os << "lambda_s_seq = " << fmt_double(lambda_s_seq) << "\n";
    os << "lambda_d = " << fmt_double(lambda_d) << "\n";
    os << "tau_min = " << fmt_double(tau_min) << "\n";
    os << "tau_max = " << fmt_double(tau_max) << "\n";
    os << "dataset = " << dataset << "\n";
    os << "gen_count = " << gen_count << "\n";
    os << "gen_colors = " << gen_colors << "\n";
    os << "gen_speeds = " << gen_speeds << "\n";
    os << "gen_shapes = " << gen_shapes << "\n";
    os << "gen_motions = " << gen_motions << "\n";
    return os.str();
}

Config parse_config_text(const std::string& text) {
    Config cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: line " + std::to_string(lineno) + " is not 'key = value'");
        cfg.apply_kv(trim(line.substr(0, eq)), line.substr(eq + 1));
    }
    return cfg;
}

Config parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

}  // namespace vdsm
