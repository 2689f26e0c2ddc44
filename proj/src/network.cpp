#include "tubeseg/network.hpp"

#include <cmath>
#include <stdexcept>

#include "tubeseg/rng.hpp"

namespace tubeseg {

NetworkConfig NetworkConfig::desk() {
    NetworkConfig c;
    c.base_width = 16;
    c.stage_depths = {2, 2, 2, 2};
    return c;
}

void NetworkConfig::validate() const {
    if (num_classes != 2 && num_classes != 3)
        throw std::invalid_argument("num_classes must be 2 or 3, got " +
                                    std::to_string(num_classes));
    if (stage_depths.size() != 4)
        throw std::invalid_argument("stage_depths must list 4 stages");
    for (int d : stage_depths)
        if (d < 1) throw std::invalid_argument("stage depths must be >= 1");
    if (base_width < 1) throw std::invalid_argument("base_width must be >= 1");
    if (se_reduction < 1) throw std::invalid_argument("se_reduction must be >= 1");
    if (base_width % se_reduction != 0)
        throw std::invalid_argument("base_width must be divisible by se_reduction");
    if (block_kind == BlockKind::bottleneck && base_width % 4 != 0)
        throw std::invalid_argument("bottleneck blocks require base_width divisible by 4");
    if (in_channels < 1) throw std::invalid_argument("in_channels must be >= 1");
}

// ---- ParameterStore ----

template <typename T>
Tensor<T>& ParameterStore<T>::add(const std::string& name, Shape shape, bool trainable) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    index_[name] = entries_.size();
    entries_.push_back(ParamEntry<T>{name, Tensor<T>(std::move(shape), T(0), trainable), trainable});
    return entries_.back().tensor;
}

template <typename T>
Tensor<T>& ParameterStore<T>::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return entries_[it->second].tensor;
}

template <typename T>
const Tensor<T>& ParameterStore<T>::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return entries_[it->second].tensor;
}

template <typename T>
std::int64_t ParameterStore<T>::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& e : entries_)
        if (e.trainable) n += e.tensor.numel();
    return n;
}

template <typename T>
void ParameterStore<T>::zero_grads() {
    for (auto& e : entries_) e.tensor.zero_grad();
}

// ---- blocks ----

template <typename T>
Tensor<T> residual_block(const Tensor<T>& x, ResidualBlockParams<T>& p, bool training) {
    Tensor<T> h = conv2d(x, p.conv1.weight, p.stride, 1);
    h = relu(batchnorm2d(h, p.conv1.bn.gamma, p.conv1.bn.beta, p.conv1.bn.state, training));
    h = conv2d(h, p.conv2.weight, 1, 1);
    h = batchnorm2d(h, p.conv2.bn.gamma, p.conv2.bn.beta, p.conv2.bn.state, training);
    Tensor<T> shortcut = p.shortcut_weight
                             ? conv2d(x, *p.shortcut_weight, p.stride, 0)
                             : x;
    return relu(add(h, shortcut));
}

template <typename T>
Tensor<T> bottleneck_block(const Tensor<T>& x, BottleneckBlockParams<T>& p, bool training) {
    Tensor<T> h = conv2d(x, p.reduce.weight, 1, 0);
    h = relu(batchnorm2d(h, p.reduce.bn.gamma, p.reduce.bn.beta, p.reduce.bn.state, training));
    h = conv2d(h, p.conv.weight, p.stride, 1);
    h = relu(batchnorm2d(h, p.conv.bn.gamma, p.conv.bn.beta, p.conv.bn.state, training));
    h = conv2d(h, p.expand.weight, 1, 0);
    h = batchnorm2d(h, p.expand.bn.gamma, p.expand.bn.beta, p.expand.bn.state, training);
    Tensor<T> shortcut = p.shortcut_weight
                             ? conv2d(x, *p.shortcut_weight, p.stride, 0)
                             : x;
    return relu(add(h, shortcut));
}

template <typename T>
Tensor<T> cse(const Tensor<T>& x, const CseParams<T>& p) {
    Tensor<T> s = global_avg_pool(x);
    s = relu(conv2d(s, p.fc1_weight, &p.fc1_bias, 1, 0));
    s = sigmoid(conv2d(s, p.fc2_weight, &p.fc2_bias, 1, 0));
    return mul_broadcast(x, s);
}

template <typename T>
Tensor<T> sse(const Tensor<T>& x, const SseParams<T>& p) {
    Tensor<T> q = sigmoid(conv2d(x, p.weight, &p.bias, 1, 0));
    return mul_broadcast(x, q);
}

template <typename T>
Tensor<T> scse(const Tensor<T>& x, const ScseParams<T>& p) {
    return add(cse(x, p.cse), sse(x, p.sse));
}

template <typename T>
Tensor<T> decoder_block(const Tensor<T>& x, const Tensor<T>& skip, DecoderBlockParams<T>& p,
                        bool training, bool attention_before_concat) {
    Tensor<T> up = nearest_upsample(x, 2);
    if (up.shape()[2] != skip.shape()[2] || up.shape()[3] != skip.shape()[3])
        throw std::invalid_argument("decoder_block: upsampled input " + shape_str(up.shape()) +
                                    " does not match skip " + shape_str(skip.shape()));
    Tensor<T> fused;
    if (attention_before_concat) {
        fused = concat_channels(scse(up, p.attention), skip);
    } else {
        fused = scse(concat_channels(up, skip), p.attention);
    }
    Tensor<T> h = conv2d(fused, p.conv_weight, 1, 1);
    return relu(batchnorm2d(h, p.bn.gamma, p.bn.beta, p.bn.state, training));
}

template <typename T>
Tensor<T> segmentation_head(const Tensor<T>& x, HeadParams<T>& p, bool training) {
    Tensor<T> h = conv2d(x, p.conv1_weight, 1, 1);
    h = relu(batchnorm2d(h, p.bn.gamma, p.bn.beta, p.bn.state, training));
    h = scse(h, p.attention);
    return conv2d(h, p.conv2_weight, &p.conv2_bias, 1, 1);
}

// ---- Network ----

template <typename T>
Tensor<T>& Network<T>::add_conv(const std::string& name, int cin, int cout, int k,
                                std::uint64_t seed) {
    Tensor<T>& w = params_.add(name, Shape{cout, cin, k, k}, true);
    const double fan_in = static_cast<double>(cin) * k * k;
    const double stddev = std::sqrt(2.0 / fan_in);
    Rng rng(mix_seed(seed, hash_name(name)));
    for (auto& v : w.values_mut()) v = static_cast<T>(rng.normal(0.0, stddev));
    return w;
}

template <typename T>
Tensor<T>& Network<T>::add_bias(const std::string& name, int cout) {
    return params_.add(name, Shape{cout}, true);
}

template <typename T>
BnParams<T> Network<T>::add_bn(const std::string& prefix, int c) {
    BnParams<T> bn;
    bn.gamma = params_.add(prefix + ".gamma", Shape{c}, true);
    for (auto& v : bn.gamma.values_mut()) v = T(1);
    bn.beta = params_.add(prefix + ".beta", Shape{c}, true);
    bn.state.running_mean = params_.add(prefix + ".running_mean", Shape{c}, false);
    bn.state.running_var = params_.add(prefix + ".running_var", Shape{c}, false);
    for (auto& v : bn.state.running_var.values_mut()) v = T(1);
    bn.state.batches_seen = params_.add(prefix + ".batches_seen", Shape{1}, false);
    return bn;
}

template <typename T>
ScseParams<T> Network<T>::add_scse(const std::string& prefix, int c, std::uint64_t seed) {
    if (c % config_.se_reduction != 0)
        throw std::invalid_argument("scse: channel count " + std::to_string(c) +
                                    " not divisible by reduction " +
                                    std::to_string(config_.se_reduction));
    const int mid = c / config_.se_reduction;
    ScseParams<T> p;
    p.cse.fc1_weight = add_conv(prefix + ".cse.fc1.weight", c, mid, 1, seed);
    p.cse.fc1_bias = add_bias(prefix + ".cse.fc1.bias", mid);
    p.cse.fc2_weight = add_conv(prefix + ".cse.fc2.weight", mid, c, 1, seed);
    p.cse.fc2_bias = add_bias(prefix + ".cse.fc2.bias", c);
    p.sse.weight = add_conv(prefix + ".sse.conv.weight", c, 1, 1, seed);
    p.sse.bias = add_bias(prefix + ".sse.conv.bias", 1);
    return p;
}

template <typename T>
typename Network<T>::EncoderBlock Network<T>::add_encoder_block(const std::string& prefix, int cin,
                                                                int cout, int stride,
                                                                std::uint64_t seed) {
    EncoderBlock block;
    const bool project = stride != 1 || cin != cout;
    if (config_.block_kind == BlockKind::residual) {
        ResidualBlockParams<T> p;
        p.stride = stride;
        p.conv1.weight = add_conv(prefix + ".conv1.weight", cin, cout, 3, seed);
        p.conv1.bn = add_bn(prefix + ".bn1", cout);
        p.conv2.weight = add_conv(prefix + ".conv2.weight", cout, cout, 3, seed);
        p.conv2.bn = add_bn(prefix + ".bn2", cout);
        if (config_.zero_init_residual_bn)
            for (auto& v : p.conv2.bn.gamma.values_mut()) v = T(0);
        if (project) p.shortcut_weight = add_conv(prefix + ".shortcut.weight", cin, cout, 1, seed);
        block.residual = std::move(p);
    } else {
        const int mid = cout / 4;
        BottleneckBlockParams<T> p;
        p.stride = stride;
        p.reduce.weight = add_conv(prefix + ".conv1.weight", cin, mid, 1, seed);
        p.reduce.bn = add_bn(prefix + ".bn1", mid);
        p.conv.weight = add_conv(prefix + ".conv2.weight", mid, mid, 3, seed);
        p.conv.bn = add_bn(prefix + ".bn2", mid);
        p.expand.weight = add_conv(prefix + ".conv3.weight", mid, cout, 1, seed);
        p.expand.bn = add_bn(prefix + ".bn3", cout);
        if (config_.zero_init_residual_bn)
            for (auto& v : p.expand.bn.gamma.values_mut()) v = T(0);
        if (project) p.shortcut_weight = add_conv(prefix + ".shortcut.weight", cin, cout, 1, seed);
        block.bottleneck = std::move(p);
    }
    return block;
}

template <typename T>
Network<T>::Network(NetworkConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    const int b = config_.base_width;

    stem_.weight = add_conv("encoder.stem.conv.weight", config_.in_channels, b, 7, seed);
    stem_.bn = add_bn("encoder.stem.bn", b);

    const int stage_width[4] = {b, 2 * b, 4 * b, 8 * b};
    int cin = b;
    for (int s = 0; s < 4; ++s) {
        std::vector<EncoderBlock> blocks;
        for (int i = 0; i < config_.stage_depths[s]; ++i) {
            const int stride = (s > 0 && i == 0) ? 2 : 1;
            const std::string prefix = "encoder.stage" + std::to_string(s + 1) + ".block" +
                                       std::to_string(i + 1);
            blocks.push_back(add_encoder_block(prefix, cin, stage_width[s], stride, seed));
            cin = stage_width[s];
        }
        stages_.push_back(std::move(blocks));
    }

    // Decoder blocks consume skips in reverse depth order; output width
    // follows the skip width.
    const int skip_width[4] = {4 * b, 2 * b, b, b};
    int x_width = 8 * b;
    for (int i = 0; i < 4; ++i) {
        const std::string prefix = "decoder.block" + std::to_string(i + 1);
        DecoderBlockParams<T> p;
        const int concat_width = x_width + skip_width[i];
        const int attended = config_.attention_before_concat ? x_width : concat_width;
        p.attention = add_scse(prefix + ".scse", attended, seed);
        p.conv_weight = add_conv(prefix + ".conv.weight", concat_width, skip_width[i], 3, seed);
        p.bn = add_bn(prefix + ".bn", skip_width[i]);
        decoder_.push_back(std::move(p));
        x_width = skip_width[i];
    }

    head_.conv1_weight = add_conv("head.conv1.weight", x_width, b, 3, seed);
    head_.bn = add_bn("head.bn", b);
    head_.attention = add_scse("head.scse", b, seed);
    head_.conv2_weight = add_conv("head.conv2.weight", b, config_.num_classes, 3, seed);
    head_.conv2_bias = add_bias("head.conv2.bias", config_.num_classes);
}

template <typename T>
std::vector<Tensor<T>> Network<T>::encoder_forward(const Tensor<T>& image, bool training) {
    const Shape& s = image.shape();
    if (s.size() != 4)
        throw std::invalid_argument("encoder expects NCHW input, got " + shape_str(s));
    if (s[1] != config_.in_channels)
        throw std::invalid_argument("encoder expects " + std::to_string(config_.in_channels) +
                                    " input channels, got " + shape_str(s));
    if (s[2] % 32 != 0 || s[3] % 32 != 0)
        throw std::invalid_argument("input spatial extents must be divisible by 32, got " +
                                    shape_str(s));

    std::vector<Tensor<T>> features;
    Tensor<T> h = conv2d(image, stem_.weight, 2, 3);
    h = relu(batchnorm2d(h, stem_.bn.gamma, stem_.bn.beta, stem_.bn.state, training));
    features.push_back(h);  // 1/2

    h = maxpool2d(h, 3, 2, 1);  // 1/4
    for (std::size_t s_idx = 0; s_idx < stages_.size(); ++s_idx) {
        for (auto& block : stages_[s_idx]) {
            if (block.residual)
                h = residual_block(h, *block.residual, training);
            else
                h = bottleneck_block(h, *block.bottleneck, training);
        }
        features.push_back(h);  // 1/4, 1/8, 1/16, 1/32
    }
    return features;
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& image, bool training) {
    std::vector<Tensor<T>> f = encoder_forward(image, training);
    Tensor<T> h = f[4];
    for (int i = 0; i < 4; ++i)
        h = decoder_block(h, f[3 - i], decoder_[i], training, config_.attention_before_concat);
    h = nearest_upsample(h, 2);
    return segmentation_head(h, head_, training);
}

// ---- explicit instantiations ----

#define TUBESEG_INSTANTIATE(T)                                                                \
    template class ParameterStore<T>;                                                        \
    template class Network<T>;                                                               \
    template Tensor<T> residual_block(const Tensor<T>&, ResidualBlockParams<T>&, bool);      \
    template Tensor<T> bottleneck_block(const Tensor<T>&, BottleneckBlockParams<T>&, bool);  \
    template Tensor<T> cse(const Tensor<T>&, const CseParams<T>&);                           \
    template Tensor<T> sse(const Tensor<T>&, const SseParams<T>&);                           \
    template Tensor<T> scse(const Tensor<T>&, const ScseParams<T>&);                         \
    template Tensor<T> decoder_block(const Tensor<T>&, const Tensor<T>&,                     \
                                     DecoderBlockParams<T>&, bool, bool);                    \
    template Tensor<T> segmentation_head(const Tensor<T>&, HeadParams<T>&, bool);

TUBESEG_INSTANTIATE(float)
TUBESEG_INSTANTIATE(double)

#undef TUBESEG_INSTANTIATE

}  // namespace tubeseg
