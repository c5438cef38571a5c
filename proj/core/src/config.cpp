#include "icflow/config.hpp"

#include <fstream>
#include <sstream>
#include <vector>

namespace icflow {

namespace {

std::vector<double> parse_list(const std::string& value) {
    std::vector<double> out;
    std::string item;
    std::istringstream is(value);
    while (std::getline(is, item, '/')) out.push_back(std::stod(item));
    return out;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw IoError("config line " + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        try {
            if (key == "alpha_fm") cfg.loss.alpha_fm = std::stod(value);
            else if (key == "lambda_id") cfg.loss.lambda_id = std::stod(value);
            else if (key == "lambda_h") cfg.loss.lambda_h = std::stod(value);
            else if (key == "omega_min") cfg.loss.omega_min = std::stod(value);
            else if (key == "temperature") cfg.model.temperature = std::stod(value);
            else if (key == "memory") cfg.model.memory_budget = std::stol(value);
            else if (key == "steps") cfg.sampler.steps = std::stoi(value);
            else if (key == "guidance") cfg.sampler.guidance_scale = std::stod(value);
            else if (key == "seed") cfg.sampler.seed = std::stoull(value);
            else if (key == "ref_mix") {
                const auto v = parse_list(value);
                if (v.size() != 4) throw IoError("ref_mix needs 4 entries");
                for (int i = 0; i < 4; ++i) cfg.ref_mix[static_cast<std::size_t>(i)] = v[static_cast<std::size_t>(i)];
            } else if (key == "strength_buckets") {
                const auto v = parse_list(value);
                if (v.size() != 3) throw IoError("strength_buckets needs 3 entries");
                for (int i = 0; i < 3; ++i) cfg.strength_buckets[static_cast<std::size_t>(i)] = v[static_cast<std::size_t>(i)];
            }
            else if (key == "d_model") cfg.model.d_model = std::stol(value);
            else if (key == "n_heads") cfg.model.n_heads = std::stol(value);
            else if (key == "n_double_blocks") cfg.model.n_double = std::stol(value);
            else if (key == "n_single_blocks") cfg.model.n_single = std::stol(value);
            else if (key == "patch") cfg.model.patch = std::stol(value);
            else if (key == "image_size") cfg.model.image_size = std::stol(value);
            else if (key == "image_channels") cfg.model.image_channels = std::stol(value);
            else if (key == "id_dim") cfg.model.id_dim = std::stol(value);
            else if (key == "text_tokens") cfg.model.text_tokens = std::stol(value);
            else if (key == "rank") cfg.model.rank = std::stol(value);
            else if (key == "s_deg") cfg.model.s_deg = std::stod(value);
            else if (key == "sigma_embed_dim") cfg.model.sigma_embed_dim = std::stol(value);
            else if (key == "rope_theta") cfg.model.rope.theta = std::stod(value);
            else if (key == "rope_axis_dims") {
                const auto v = parse_list(value);
                if (v.size() != 4) throw IoError("rope_axis_dims needs 4 entries");
                for (int i = 0; i < 4; ++i)
                    cfg.model.rope.axis_dims[static_cast<std::size_t>(i)] = static_cast<Index>(v[static_cast<std::size_t>(i)]);
            }
            else if (key == "n_identities") cfg.n_identities = std::stol(value);
            else if (key == "refs_per_identity") cfg.refs_per_identity = std::stol(value);
            else if (key == "data_seed") cfg.data_seed = std::stoull(value);
            else if (key == "train_steps") cfg.train_steps = std::stol(value);
            else if (key == "batch_size") cfg.batch_size = std::stol(value);
            else if (key == "lr") cfg.lr = std::stod(value);
            else if (key == "momentum") cfg.momentum = std::stod(value);
            else if (key == "train_seed") cfg.train_seed = std::stoull(value);
            else if (key == "init_seed") cfg.init_seed = std::stoull(value);
            else throw IoError("unknown config key: " + key);
        } catch (const std::invalid_argument&) {
            throw IoError("config line " + std::to_string(lineno) + ": bad value for " + key);
        }
    }
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config: " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse_config_text(buf.str());
}

std::string config_to_text(const RunConfig& cfg) {
    std::ostringstream os;
    os << "alpha_fm=" << cfg.loss.alpha_fm << "\n"
       << "lambda_id=" << cfg.loss.lambda_id << "\n"
       << "lambda_h=" << cfg.loss.lambda_h << "\n"
       << "omega_min=" << cfg.loss.omega_min << "\n"
       << "temperature=" << cfg.model.temperature << "\n"
       << "memory=" << cfg.model.memory_budget << "\n"
       << "steps=" << cfg.sampler.steps << "\n"
       << "guidance=" << cfg.sampler.guidance_scale << "\n"
       << "seed=" << cfg.sampler.seed << "\n"
       << "ref_mix=" << cfg.ref_mix[0] << "/" << cfg.ref_mix[1] << "/" << cfg.ref_mix[2] << "/"
       << cfg.ref_mix[3] << "\n"
       << "strength_buckets=" << cfg.strength_buckets[0] << "/" << cfg.strength_buckets[1] << "/"
       << cfg.strength_buckets[2] << "\n"
       << "d_model=" << cfg.model.d_model << "\n"
       << "n_heads=" << cfg.model.n_heads << "\n"
       << "n_double_blocks=" << cfg.model.n_double << "\n"
       << "n_single_blocks=" << cfg.model.n_single << "\n"
       << "patch=" << cfg.model.patch << "\n"
       << "image_size=" << cfg.model.image_size << "\n"
       << "image_channels=" << cfg.model.image_channels << "\n"
       << "id_dim=" << cfg.model.id_dim << "\n"
       << "text_tokens=" << cfg.model.text_tokens << "\n"
       << "rank=" << cfg.model.rank << "\n"
       << "s_deg=" << cfg.model.s_deg << "\n"
       << "sigma_embed_dim=" << cfg.model.sigma_embed_dim << "\n"
       << "rope_theta=" << cfg.model.rope.theta << "\n"
       << "rope_axis_dims=" << cfg.model.rope.axis_dims[0] << "/" << cfg.model.rope.axis_dims[1]
       << "/" << cfg.model.rope.axis_dims[2] << "/" << cfg.model.rope.axis_dims[3] << "\n"
       << "n_identities=" << cfg.n_identities << "\n"
       << "refs_per_identity=" << cfg.refs_per_identity << "\n"
       << "data_seed=" << cfg.data_seed << "\n"
       << "train_steps=" << cfg.train_steps << "\n"
       << "batch_size=" << cfg.batch_size << "\n"
       << "lr=" << cfg.lr << "\n"
       << "momentum=" << cfg.momentum << "\n"
       << "train_seed=" << cfg.train_seed << "\n"
       << "init_seed=" << cfg.init_seed << "\n";
    return os.str();
}

}  // namespace icflow
