#include "fmm/model.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "fmm/errors.hpp"

namespace fmm {

bool has_fmm_head(const Autoencoder& model) { return std::holds_alternative<FMMHead>(model.decoder); }

int latent_dim(const Autoencoder& model) {
    return static_cast<int>(model.encoder.layers.back().weights.rows());
}

namespace {

MLP make_encoder(int l_pad, const ArchConfig& arch, Rng& rng) {
    if (arch.encoder_sizes.empty()) throw ValidationError("ArchConfig: encoder_sizes must be non-empty");
    MLP enc;
    enc.dropout_rate = arch.dropout;
    int in = l_pad;
    for (int size : arch.encoder_sizes) {
        enc.layers.push_back(make_dense_layer(in, size, Activation::Relu, rng));
        in = size;
    }
    return enc;
}

}  // namespace

Autoencoder make_dense_autoencoder(int l_pad, const ArchConfig& arch, std::uint64_t seed) {
    Rng rng(seed);
    Autoencoder model;
    model.l_pad = l_pad;
    model.init_seed = seed;
    model.encoder = make_encoder(l_pad, arch, rng);
    MLP dec;
    dec.dropout_rate = arch.dropout;
    int in = arch.encoder_sizes.back();
    for (std::size_t i = arch.encoder_sizes.size(); i-- > 1;) {
        dec.layers.push_back(make_dense_layer(in, arch.encoder_sizes[i - 1], Activation::Relu, rng));
        in = arch.encoder_sizes[i - 1];
    }
    dec.layers.push_back(make_dense_layer(in, l_pad, Activation::Linear, rng));
    model.decoder = std::move(dec);
    return model;
}

Autoencoder make_fmm_autoencoder(int l_pad, const ArchConfig& arch, std::uint64_t seed) {
    Rng rng(seed);
    Autoencoder model;
    model.l_pad = l_pad;
    model.init_seed = seed;
    model.encoder = make_encoder(l_pad, arch, rng);
    model.decoder = make_fmm_head(arch.encoder_sizes.back(), arch.head_hidden, arch.omega_max, rng);
    return model;
}

std::vector<ParamView> collect_params(Autoencoder& model) {
    auto params = collect_params(model.encoder, "encoder");
    if (has_fmm_head(model)) {
        auto head = collect_params(std::get<FMMHead>(model.decoder), "head");
        params.insert(params.end(), head.begin(), head.end());
    } else {
        auto dec = collect_params(std::get<MLP>(model.decoder), "decoder");
        params.insert(params.end(), dec.begin(), dec.end());
    }
    return params;
}

std::vector<GradView> collect_grads(const AutoencoderGrads& grads, const Autoencoder& model) {
    auto views = collect_grads(grads.encoder, "encoder");
    if (has_fmm_head(model)) {
        auto head = collect_grads(std::get<HeadGrads>(grads.decoder), "head");
        views.insert(views.end(), head.begin(), head.end());
    } else {
        auto dec = collect_grads(std::get<MLPGrads>(grads.decoder), "decoder");
        views.insert(views.end(), dec.begin(), dec.end());
    }
    return views;
}

AutoencoderOutput autoencoder_forward(const Autoencoder& model, const Matrix& x,
                                      std::span<const int> valid_lens, bool training, Rng& rng,
                                      AutoencoderCache* cache) {
    AutoencoderCache local;
    AutoencoderCache* c = cache ? cache : &local;
    const Matrix latent = forward(model.encoder, x, training, rng, &c->encoder);
    AutoencoderOutput out;
    if (has_fmm_head(model)) {
        const auto& head = std::get<FMMHead>(model.decoder);
        c->coeffs = head_forward(head, latent, training, rng, &c->head);
        out.coeffs = c->coeffs;
        out.reconstruction = reconstruct(c->coeffs, valid_lens, model.l_pad, &c->recon);
    } else {
        out.reconstruction = forward(std::get<MLP>(model.decoder), latent, training, rng, &c->decoder_mlp);
    }
    return out;
}

void autoencoder_backward(const Autoencoder& model, const AutoencoderCache& cache,
                          const Matrix& upstream_recon, AutoencoderGrads& grads) {
    Matrix dlatent;
    if (has_fmm_head(model)) {
        const auto& head = std::get<FMMHead>(model.decoder);
        const Matrix dcoeffs = reconstruct_backward(cache.recon, upstream_recon);
        grads.decoder = HeadGrads{};
        dlatent = head_backward(head, cache.head, dcoeffs, std::get<HeadGrads>(grads.decoder));
    } else {
        grads.decoder = MLPGrads{};
        dlatent = backward(std::get<MLP>(model.decoder), cache.decoder_mlp, upstream_recon,
                           std::get<MLPGrads>(grads.decoder));
    }
    backward(model.encoder, cache.encoder, dlatent, grads.encoder);
}

void autoencoder_backward_coeffs(const Autoencoder& model, const AutoencoderCache& cache,
                                 const Matrix& upstream_coeffs, AutoencoderGrads& grads) {
    if (!has_fmm_head(model)) {
        throw StructuralError("coefficient regression requires the FMM head decoder");
    }
    const auto& head = std::get<FMMHead>(model.decoder);
    grads.decoder = HeadGrads{};
    const Matrix dlatent =
        head_backward(head, cache.head, upstream_coeffs, std::get<HeadGrads>(grads.decoder));
    backward(model.encoder, cache.encoder, dlatent, grads.encoder);
}

std::vector<Eigen::ArrayXd> snapshot_params(Autoencoder& model) {
    std::vector<Eigen::ArrayXd> snap;
    for (const auto& p : collect_params(model)) {
        snap.push_back(Eigen::Map<const Eigen::ArrayXd>(p.data, p.size));
    }
    return snap;
}

void restore_params(Autoencoder& model, const std::vector<Eigen::ArrayXd>& snapshot) {
    auto params = collect_params(model);
    if (params.size() != snapshot.size()) throw StructuralError("restore_params: snapshot mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].size != snapshot[i].size()) throw StructuralError("restore_params: size mismatch");
        Eigen::Map<Eigen::ArrayXd>(params[i].data, params[i].size) = snapshot[i];
    }
}

namespace {

nlohmann::json mlp_arch(const MLP& m) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : m.layers) {
        layers.push_back({{"in", l.weights.cols()}, {"out", l.weights.rows()},
                          {"activation", activation_name(l.activation)}});
    }
    return {{"layers", layers}, {"dropout", m.dropout_rate}};
}

MLP mlp_from_arch(const nlohmann::json& j) {
    MLP m;
    m.dropout_rate = j.at("dropout").get<double>();
    for (const auto& l : j.at("layers")) {
        DenseLayer layer;
        layer.weights = Matrix::Zero(l.at("out").get<int>(), l.at("in").get<int>());
        layer.bias = Vector::Zero(l.at("out").get<int>());
        layer.activation = activation_from_name(l.at("activation").get<std::string>());
        m.layers.push_back(std::move(layer));
    }
    return m;
}

}  // namespace

void save_checkpoint(const Autoencoder& model, const std::filesystem::path& path) {
    auto& mutable_model = const_cast<Autoencoder&>(model);
    auto params = collect_params(mutable_model);

    nlohmann::json header;
    header["layout_version"] = kCheckpointLayoutVersion;
    header["seed"] = model.init_seed;
    header["l_pad"] = model.l_pad;
    header["encoder"] = mlp_arch(model.encoder);
    if (has_fmm_head(model)) {
        const auto& head = std::get<FMMHead>(model.decoder);
        header["type"] = "fmm_dense_ae";
        header["omega_max"] = head.omega_max;
        header["head"] = mlp_arch(head.net);
    } else {
        header["type"] = "dense_ae";
        header["omega_max"] = 0.0;
        header["decoder"] = mlp_arch(std::get<MLP>(model.decoder));
    }
    nlohmann::json index = nlohmann::json::array();
    for (const auto& p : params) index.push_back({{"name", p.name}, {"size", p.size}});
    header["params"] = index;

    const std::string head_str = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw StructuralError("save_checkpoint: cannot open " + path.string());
    const std::uint32_t len = static_cast<std::uint32_t>(head_str.size());
    unsigned char len_bytes[4] = {static_cast<unsigned char>(len & 0xff),
                                  static_cast<unsigned char>((len >> 8) & 0xff),
                                  static_cast<unsigned char>((len >> 16) & 0xff),
                                  static_cast<unsigned char>((len >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(len_bytes), 4);
    out.write(head_str.data(), static_cast<std::streamsize>(head_str.size()));
    for (const auto& p : params) {
        out.write(reinterpret_cast<const char*>(p.data), static_cast<std::streamsize>(p.size * 8));
    }
    if (!out) throw StructuralError("save_checkpoint: write failed for " + path.string());
}

Autoencoder load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StructuralError("load_checkpoint: cannot open " + path.string());
    unsigned char len_bytes[4];
    in.read(reinterpret_cast<char*>(len_bytes), 4);
    if (!in) throw StructuralError("load_checkpoint: truncated header length");
    const std::uint32_t len = static_cast<std::uint32_t>(len_bytes[0]) |
                              (static_cast<std::uint32_t>(len_bytes[1]) << 8) |
                              (static_cast<std::uint32_t>(len_bytes[2]) << 16) |
                              (static_cast<std::uint32_t>(len_bytes[3]) << 24);
    std::string head_str(len, '\0');
    in.read(head_str.data(), static_cast<std::streamsize>(len));
    if (!in) throw StructuralError("load_checkpoint: truncated header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(head_str);
    } catch (const nlohmann::json::exception& e) {
        throw StructuralError(std::string("load_checkpoint: bad header: ") + e.what());
    }
    if (header.at("layout_version").get<int>() != kCheckpointLayoutVersion) {
        throw StructuralError("load_checkpoint: unsupported layout version " +
                              std::to_string(header.at("layout_version").get<int>()));
    }

    Autoencoder model;
    model.init_seed = header.at("seed").get<std::uint64_t>();
    model.l_pad = header.at("l_pad").get<int>();
    model.encoder = mlp_from_arch(header.at("encoder"));
    const std::string type = header.at("type").get<std::string>();
    if (type == "fmm_dense_ae") {
        FMMHead head;
        head.pooling = IdentityPooling{};
        head.net = mlp_from_arch(header.at("head"));
        head.omega_max = header.at("omega_max").get<double>();
        validate(head);
        model.decoder = std::move(head);
    } else if (type == "dense_ae") {
        model.decoder = mlp_from_arch(header.at("decoder"));
    } else {
        throw StructuralError("load_checkpoint: unknown model type " + type);
    }

    auto params = collect_params(model);
    const auto& index = header.at("params");
    if (index.size() != params.size()) throw StructuralError("load_checkpoint: parameter index mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (index[i].at("name").get<std::string>() != params[i].name ||
            index[i].at("size").get<std::ptrdiff_t>() != params[i].size) {
            throw StructuralError("load_checkpoint: parameter layout mismatch at " + params[i].name);
        }
        in.read(reinterpret_cast<char*>(params[i].data), static_cast<std::streamsize>(params[i].size * 8));
        if (!in) throw StructuralError("load_checkpoint: truncated parameter block " + params[i].name);
    }
    return model;
}

}  // namespace fmm
