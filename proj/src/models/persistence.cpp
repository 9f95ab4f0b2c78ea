#include <cstring>
#include <fstream>
#include <sstream>

#include "loadloop/models/model.hpp"

namespace loadloop::models {

namespace {

class Writer {
public:
    void put(double v) { data_.push_back(v); }
    void put(const std::vector<double>& v) { data_.insert(data_.end(), v.begin(), v.end()); }
    void put(const Matrix& m) { data_.insert(data_.end(), m.data(), m.data() + m.size()); }
    void put(const Vector& v) { data_.insert(data_.end(), v.data(), v.data() + v.size()); }
    const std::vector<double>& data() const { return data_; }

private:
    std::vector<double> data_;
};

class Reader {
public:
    explicit Reader(std::vector<double> data) : data_(std::move(data)) {}
    double get() {
        need(1);
        return data_[at_++];
    }
    std::vector<double> get(std::size_t n) {
        need(n);
        std::vector<double> v(data_.begin() + static_cast<long>(at_), data_.begin() + static_cast<long>(at_ + n));
        at_ += n;
        return v;
    }
    Matrix matrix(Eigen::Index rows, Eigen::Index cols) {
        need(static_cast<std::size_t>(rows * cols));
        Matrix m(rows, cols);
        std::memcpy(m.data(), data_.data() + at_, sizeof(double) * static_cast<std::size_t>(m.size()));
        at_ += static_cast<std::size_t>(m.size());
        return m;
    }
    Vector vector(Eigen::Index n) {
        need(static_cast<std::size_t>(n));
        Vector v(n);
        std::memcpy(v.data(), data_.data() + at_, sizeof(double) * static_cast<std::size_t>(n));
        at_ += static_cast<std::size_t>(n);
        return v;
    }
    bool done() const { return at_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (at_ + n > data_.size()) throw Error("model payload truncated");
    }
    std::vector<double> data_;
    std::size_t at_ = 0;
};

void put_u64(std::string& out, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.append(buf, 8);
}

std::uint64_t get_u64(std::string_view in, std::size_t& at) {
    if (at + 8 > in.size()) throw Error("model file truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
    at += 8;
    return v;
}

}  // namespace

std::string serialize_model(const TrainedModel& model, const Json& extra) {
    Json header{{"model_type", std::string(to_string(model.type))},
                {"hyperparams", to_json(model.hyper)},
                {"feature_names", model.feature_names},
                {"seed", model.seed},
                {"horizon", model.horizon},
                {"extra", extra}};
    Writer w;
    w.put(model.x_scaler.mean);
    w.put(model.x_scaler.scale);
    w.put(model.y_scaler.mean);
    w.put(model.y_scaler.scale);
    std::visit(
        [&](const auto& fit) {
            using T = std::decay_t<decltype(fit)>;
            if constexpr (std::is_same_v<T, LinearFit>) {
                header["layout"] = {{"kind", "linear"}};
                w.put(fit.coef);
                w.put(fit.intercept);
            } else if constexpr (std::is_same_v<T, MlpNetwork>) {
                Json sizes = Json::array();
                sizes.push_back(fit.weights.front().rows());
                for (const auto& wm : fit.weights) sizes.push_back(wm.cols());
                header["layout"] = {{"kind", "mlp"},
                                    {"sizes", sizes},
                                    {"activation", fit.activation == Activation::relu ? "relu" : "identity"}};
                for (std::size_t l = 0; l < fit.weights.size(); ++l) {
                    w.put(fit.weights[l]);
                    w.put(fit.biases[l]);
                }
            } else {
                Json trees = Json::array();
                for (const auto& head : fit.heads) {
                    Json counts = Json::array();
                    for (const auto& t : head) counts.push_back(t.nodes.size());
                    trees.push_back(counts);
                }
                header["layout"] = {{"kind", "gbt"}, {"nodes", trees}};
                w.put(fit.base);
                for (const auto& head : fit.heads)
                    for (const auto& t : head)
                        for (const auto& n : t.nodes) {
                            w.put(n.feature);
                            w.put(n.threshold);
                            w.put(n.left);
                            w.put(n.right);
                            w.put(n.value);
                        }
            }
        },
        model.fitted);

    const std::string text = header.dump();
    std::string out(kModelMagic);
    put_u64(out, text.size());
    out += text;
    put_u64(out, w.data().size());
    const auto* bytes = reinterpret_cast<const char*>(w.data().data());
    out.append(bytes, w.data().size() * sizeof(double));
    return out;
}

LoadedModel deserialize_model(std::string_view bytes) {
    if (bytes.substr(0, kModelMagic.size()) != kModelMagic) throw Error("not a model file (bad magic)");
    std::size_t at = kModelMagic.size();
    const std::uint64_t header_len = get_u64(bytes, at);
    if (at + header_len > bytes.size()) throw Error("model header truncated");
    const Json header = Json::parse(bytes.substr(at, header_len));
    at += header_len;
    const std::uint64_t count = get_u64(bytes, at);
    if (at + count * sizeof(double) != bytes.size()) throw Error("model payload size mismatch");
    std::vector<double> payload(count);
    std::memcpy(payload.data(), bytes.data() + at, count * sizeof(double));
    Reader r(std::move(payload));

    LoadedModel out;
    TrainedModel& m = out.model;
    const auto type = parse_model_type(header.at("model_type").get<std::string>());
    if (!type) throw Error("unknown model type in header");
    m.type = *type;
    m.hyper = hyperparams_from_json(m.type, header.at("hyperparams"));
    m.feature_names = header.at("feature_names").get<std::vector<std::string>>();
    m.seed = header.at("seed").get<std::uint64_t>();
    m.horizon = header.at("horizon").get<int>();
    out.extra = header.value("extra", Json::object());
    const std::size_t p = m.feature_names.size();
    const auto h = static_cast<std::size_t>(m.horizon);
    m.x_scaler = {r.get(p), r.get(p)};
    m.y_scaler = {r.get(h), r.get(h)};

    const Json& layout = header.at("layout");
    const std::string kind = layout.at("kind");
    if (kind == "linear") {
        LinearFit fit;
        fit.coef = r.matrix(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(h));
        fit.intercept = r.vector(static_cast<Eigen::Index>(h));
        m.fitted = std::move(fit);
    } else if (kind == "mlp") {
        MlpNetwork net;
        net.activation = layout.at("activation") == "relu" ? Activation::relu : Activation::identity;
        const auto sizes = layout.at("sizes").get<std::vector<Eigen::Index>>();
        for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
            net.weights.push_back(r.matrix(sizes[l], sizes[l + 1]));
            net.biases.push_back(r.vector(sizes[l + 1]));
        }
        m.fitted = std::move(net);
    } else if (kind == "gbt") {
        GbtEnsemble e;
        e.base = r.get(h);
        for (const auto& counts : layout.at("nodes")) {
            std::vector<GbtTree> head;
            for (const auto& c : counts) {
                GbtTree t;
                t.nodes.resize(c.get<std::size_t>());
                for (auto& n : t.nodes) {
                    n.feature = static_cast<int>(r.get());
                    n.threshold = r.get();
                    n.left = static_cast<int>(r.get());
                    n.right = static_cast<int>(r.get());
                    n.value = r.get();
                }
                head.push_back(std::move(t));
            }
            e.heads.push_back(std::move(head));
        }
        m.fitted = std::move(e);
    } else {
        throw Error("unknown model layout '" + kind + "'");
    }
    if (!r.done()) throw Error("model payload has trailing data");
    return out;
}

void save_model(const std::filesystem::path& path, const TrainedModel& model, const Json& extra) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write model file " + path.string());
    const std::string bytes = serialize_model(model, extra);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

LoadedModel load_model(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot read model file " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return deserialize_model(ss.str());
}

}  // namespace loadloop::models
