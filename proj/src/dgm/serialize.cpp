#include "svsdu/dgm/network.hpp"

#include "svsdu/error.hpp"
#include "svsdu/kv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace svsdu::dgm {

namespace {

constexpr const char* kMagic = "svsdu-dgm-weights 1";

}  // namespace

std::string serialize_weights(const NetworkWeights& w) {
    std::string out = std::string(kMagic) + "\n";
    out += "variant = " + std::string(to_string(w.cfg.variant)) + "\n";
    out += "layers = " + std::to_string(w.cfg.n_hidden_layers) + "\n";
    out += "width = " + std::to_string(w.cfg.width) + "\n";
    out += to_kv(w.cfg.input_box);
    out += "end_config\n";
    w.visit([&](const std::string& name, const auto& a) {
        out += name + " " + std::to_string(a.rows()) + " " + std::to_string(a.cols()) + "\n";
        // column-major, one value per token
        for (Eigen::Index k = 0; k < a.size(); ++k) {
            out += format_double(a.data()[k]);
            out += (k + 1) % 8 == 0 || k + 1 == a.size() ? '\n' : ' ';
        }
    });
    out += "b 1 1\n" + format_double(w.b) + "\n";
    return out;
}

NetworkWeights parse_weights(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kMagic) {
        throw Error(ErrorCode::ParseError, "not a weight container");
    }
    std::string cfg_text;
    bool closed = false;
    while (std::getline(in, line)) {
        if (line == "end_config") {
            closed = true;
            break;
        }
        cfg_text += line + "\n";
    }
    if (!closed) throw Error(ErrorCode::ParseError, "weight container has no end_config line");
    const auto rec = KvRecord::parse(cfg_text);
    NetworkConfig cfg;
    cfg.variant = parse_variant(rec.get_string("variant", "SVSDU"));
    cfg.n_hidden_layers = static_cast<int>(rec.get_int("layers", cfg.n_hidden_layers));
    cfg.width = static_cast<int>(rec.get_int("width", cfg.width));
    cfg.input_box = box_from_kv(cfg_text);
    NetworkWeights w = NetworkWeights::zeros(cfg);

    auto read_array = [&](const std::string& expect, double* data, Eigen::Index rows, Eigen::Index cols) {
        std::string name;
        Eigen::Index r = 0, c = 0;
        if (!(in >> name >> r >> c)) throw Error(ErrorCode::ParseError, "truncated weight container at " + expect);
        if (name != expect) throw Error(ErrorCode::ParseError, "expected array " + expect + ", found " + name);
        if (r != rows || c != cols) {
            throw Error(ErrorCode::ShapeMismatch, "array " + name + " has shape " + std::to_string(r) + "x" +
                                                      std::to_string(c) + ", expected " + std::to_string(rows) + "x" +
                                                      std::to_string(cols));
        }
        std::string tok;
        for (Eigen::Index k = 0; k < rows * cols; ++k) {
            if (!(in >> tok)) throw Error(ErrorCode::ParseError, "truncated array " + name);
            const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), data[k]);
            if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
                throw Error(ErrorCode::ParseError, "bad number '" + tok + "' in array " + name);
            }
        }
    };
    w.visit([&](const std::string& name, auto& a) { read_array(name, a.data(), a.rows(), a.cols()); });
    read_array("b", &w.b, 1, 1);
    if (!w.all_finite()) throw Error(ErrorCode::ParseError, "weight container holds non-finite values");
    return w;
}

void save_weights(const NetworkWeights& w, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
    out << serialize_weights(w);
    if (!out) throw Error(ErrorCode::Io, "failed writing " + path);
}

NetworkWeights load_weights(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_weights(ss.str());
}

}  // namespace svsdu::dgm
