#include "fsl/io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace fsl::io {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'F', 'S', 'L', 'N'};
constexpr std::uint8_t kTagF32 = 0;
constexpr std::uint8_t kTagF64 = 1;

template <typename T>
std::uint8_t dtype_tag() {
    return std::is_same_v<T, float> ? kTagF32 : kTagF64;
}

std::uint32_t crc(const void* p, std::size_t n) {
    uLong c = crc32(0L, Z_NULL, 0);
    const auto* b = static_cast<const Bytef*>(p);
    while (n > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
        c = crc32(c, b, chunk);
        b += chunk;
        n -= chunk;
    }
    return static_cast<std::uint32_t>(c);
}

template <typename U>
void put_raw(std::string& buf, U v) {
    char b[sizeof(U)];
    std::memcpy(b, &v, sizeof(U));
    buf.append(b, sizeof(U));
}

class Reader {
public:
    Reader(const std::string& data, const std::string& path) : d_(data), path_(path) {}

    template <typename U>
    U get() {
        U v;
        std::memcpy(&v, take(sizeof(U)), sizeof(U));
        return v;
    }
    const char* take(std::size_t n) {
        if (d_.size() - pos_ < n) throw IoError("checkpoint " + path_ + ": truncated file");
        const char* p = d_.data() + pos_;
        pos_ += n;
        return p;
    }
    [[nodiscard]] bool done() const { return pos_ == d_.size(); }

private:
    const std::string& d_;
    std::string path_;
    std::size_t pos_ = 0;
};

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

template <typename T>
void copy_converted(const NamedTensor& src, Tensor4<T>& out) {
    std::visit(
        [&](const auto& t) {
            for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<T>(t[i]);
        },
        src.value);
}

}  // namespace

const Shape& NamedTensor::shape() const {
    return std::visit([](const auto& t) -> const Shape& { return t.shape(); }, value);
}

template <typename T>
void Checkpoint::put(const std::string& name, const Tensor4<T>& t) {
    if (name.empty() || name.size() > 0xFFFF) throw std::invalid_argument("checkpoint: bad tensor name length");
    if (find(name)) throw std::invalid_argument("checkpoint: duplicate tensor " + name);
    tensors_.push_back({name, t});
}

void Checkpoint::put_scalar(const std::string& name, double v) {
    put(name, Tensor4<double>::scalar(v));
}

const NamedTensor* Checkpoint::find(const std::string& name) const {
    for (const auto& t : tensors_)
        if (t.name == name) return &t;
    return nullptr;
}

template <typename T>
void Checkpoint::get(const std::string& name, Tensor4<T>& out) const {
    const NamedTensor* t = find(name);
    if (!t) throw IoError("checkpoint: missing tensor " + name);
    if (t->shape() != out.shape()) {
        throw ShapeError("checkpoint: tensor " + name + " has shape " + t->shape().str() + ", expected " +
                         out.shape().str());
    }
    copy_converted(*t, out);
}

double Checkpoint::scalar(const std::string& name) const {
    Tensor4<double> v(Shape{1, 1, 1, 1});
    get(name, v);
    return v[0];
}

void Checkpoint::save(const std::string& path) const {
    std::string buf(kMagic, 4);
    put_raw<std::uint32_t>(buf, kCheckpointVersion);
    put_raw<std::uint32_t>(buf, static_cast<std::uint32_t>(tensors_.size()));
    for (const auto& t : tensors_) {
        put_raw<std::uint16_t>(buf, static_cast<std::uint16_t>(t.name.size()));
        buf += t.name;
        const Shape& s = t.shape();
        for (int d : {s.n, s.c, s.h, s.w}) put_raw<std::uint32_t>(buf, static_cast<std::uint32_t>(d));
        std::visit(
            [&](const auto& v) {
                using T = typename std::decay_t<decltype(v)>::value_type;
                buf.push_back(static_cast<char>(dtype_tag<T>()));
                const std::size_t bytes = v.size() * sizeof(T);
                buf.append(reinterpret_cast<const char*>(v.ptr()), bytes);
                put_raw<std::uint32_t>(buf, crc(v.ptr(), bytes));
            },
            t.value);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw IoError("write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    const std::string data = slurp(path);
    Reader r(data, path);
    if (std::memcmp(r.take(4), kMagic, 4) != 0) throw IoError("checkpoint " + path + ": bad magic");
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw IoError("checkpoint " + path + ": unsupported version " + std::to_string(version));
    }
    const auto count = r.get<std::uint32_t>();
    Checkpoint ck;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = r.get<std::uint16_t>();
        std::string name(r.take(len), len);
        Shape s;
        s.n = static_cast<int>(r.get<std::uint32_t>());
        s.c = static_cast<int>(r.get<std::uint32_t>());
        s.h = static_cast<int>(r.get<std::uint32_t>());
        s.w = static_cast<int>(r.get<std::uint32_t>());
        const auto tag = r.get<std::uint8_t>();
        auto read = [&](auto zero) {
            using T = decltype(zero);
            const std::size_t bytes = s.numel() * sizeof(T);
            const char* p = r.take(bytes);
            Tensor4<T> t(s);
            std::memcpy(t.ptr(), p, bytes);
            if (r.get<std::uint32_t>() != crc(p, bytes)) {
                throw IoError("checkpoint " + path + ": checksum mismatch in tensor " + name);
            }
            ck.tensors_.push_back({name, std::move(t)});
        };
        if (tag == kTagF32) {
            read(0.0f);
        } else if (tag == kTagF64) {
            read(0.0);
        } else {
            throw IoError("checkpoint " + path + ": unknown dtype tag in tensor " + name);
        }
    }
    if (!r.done()) throw IoError("checkpoint " + path + ": trailing bytes");
    return ck;
}

template <typename T>
Checkpoint pack_network(FSLNet<T>& net, const Adam<T>* adam) {
    Checkpoint ck;
    const NetworkConfig& c = net.config();
    ck.put_scalar("config.c_base", c.c_base);
    ck.put_scalar("config.in_channels", c.in_channels);
    ck.put_scalar("config.num_stages", c.num_stages);
    ck.put_scalar("config.lfl_layers", c.lfl_layers);
    ck.put_scalar("config.cnn_layers", c.cnn_layers);
    ck.put_scalar("config.bottleneck_dim", c.bottleneck_dim);
    ck.put_scalar("config.bottleneck", c.bottleneck ? 1 : 0);
    ck.put_scalar("config.pad", static_cast<int>(c.pad));
    ck.put_scalar("config.activation", static_cast<int>(c.activation));
    ck.put_scalar("config.topology", static_cast<int>(c.topology));
    ck.put_scalar("config.head", static_cast<int>(c.head));
    ck.put_scalar("config.num_classes", c.num_classes);
    ck.put_scalar("config.min_depth", c.min_depth);
    ck.put_scalar("config.max_depth", c.max_depth);
    ck.put_scalar("config.pose_scale", c.pose_scale);
    ck.put_scalar("config.seed", static_cast<double>(c.seed));
    for (auto* p : net.parameters()) ck.put(p->name, p->value);
    for (auto& [name, st] : net.store().bn_stats()) {
        ck.put(name + ".running_mean", st->running_mean);
        ck.put(name + ".running_var", st->running_var);
    }
    if (adam) {
        ck.put_scalar("adam.step", static_cast<double>(adam->steps()));
        ck.put_scalar("adam.lr", adam->lr());
        auto& a = const_cast<Adam<T>&>(*adam);
        for (std::size_t i = 0; i < a.params().size(); ++i) {
            ck.put("adam.m." + a.params()[i]->name, a.first_moments()[i]);
            ck.put("adam.v." + a.params()[i]->name, a.second_moments()[i]);
        }
    }
    return ck;
}

NetworkConfig unpack_config(const Checkpoint& ck) {
    NetworkConfig c;
    auto i = [&](const char* k) { return static_cast<int>(std::lround(ck.scalar(std::string("config.") + k))); };
    c.c_base = i("c_base");
    c.in_channels = i("in_channels");
    c.num_stages = i("num_stages");
    c.lfl_layers = i("lfl_layers");
    c.cnn_layers = i("cnn_layers");
    c.bottleneck_dim = i("bottleneck_dim");
    c.bottleneck = i("bottleneck") != 0;
    c.pad = static_cast<PadMode>(i("pad"));
    c.activation = static_cast<nn::Activation>(i("activation"));
    c.topology = static_cast<nn::Topology>(i("topology"));
    c.head = static_cast<HeadKind>(i("head"));
    c.num_classes = i("num_classes");
    c.min_depth = ck.scalar("config.min_depth");
    c.max_depth = ck.scalar("config.max_depth");
    c.pose_scale = ck.scalar("config.pose_scale");
    c.seed = static_cast<std::uint64_t>(ck.scalar("config.seed"));
    return c;
}

template <typename T>
void unpack_into(const Checkpoint& ck, FSLNet<T>& net, Adam<T>* adam) {
    // Stage into copies first so a failure leaves the network untouched.
    std::vector<Tensor4<T>> staged;
    auto params = net.parameters();
    auto stats = net.store().bn_stats();
    for (auto* p : params) {
        staged.emplace_back(p->value.shape());
        ck.get(p->name, staged.back());
    }
    for (auto& [name, st] : stats) {
        staged.emplace_back(st->running_mean.shape());
        ck.get(name + ".running_mean", staged.back());
        staged.emplace_back(st->running_var.shape());
        ck.get(name + ".running_var", staged.back());
    }
    if (adam) {
        for (auto* p : adam->params()) {
            staged.emplace_back(p->value.shape());
            ck.get("adam.m." + p->name, staged.back());
            staged.emplace_back(p->value.shape());
            ck.get("adam.v." + p->name, staged.back());
        }
    }
    std::size_t k = 0;
    for (auto* p : params) p->value = std::move(staged[k++]);
    for (auto& [name, st] : stats) {
        st->running_mean = std::move(staged[k++]);
        st->running_var = std::move(staged[k++]);
    }
    if (adam) {
        for (std::size_t i = 0; i < adam->params().size(); ++i) {
            adam->first_moments()[i] = std::move(staged[k++]);
            adam->second_moments()[i] = std::move(staged[k++]);
        }
        adam->set_steps(static_cast<std::int64_t>(ck.scalar("adam.step")));
        adam->set_lr(ck.scalar("adam.lr"));
    }
}

template <typename T>
std::unique_ptr<FSLNet<T>> load_network(const std::string& path) {
    const Checkpoint ck = Checkpoint::load(path);
    auto net = std::make_unique<FSLNet<T>>(unpack_config(ck));
    unpack_into(ck, *net);
    return net;
}

// ---------------------------------------------------------------------------
// Images

namespace {

void write_netpbm(const std::string& path, const char* magic, const Tensor4<double>& t, int channels) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    f << magic << '\n' << t.w() << ' ' << t.h() << "\n255\n";
    std::string row;
    for (int y = 0; y < t.h(); ++y)
        for (int x = 0; x < t.w(); ++x)
            for (int c = 0; c < channels; ++c) {
                const double v = std::clamp(t(0, c, y, x), 0.0, 1.0);
                row.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
            }
    f.write(row.data(), static_cast<std::streamsize>(row.size()));
    if (!f) throw IoError("write failed: " + path);
}

Tensor4<double> read_netpbm(const std::string& path, const char* magic, int channels) {
    const std::string data = slurp(path);
    std::istringstream in(data);
    auto token = [&]() {
        std::string tok;
        while (in >> tok) {
            if (tok[0] != '#') return tok;
            std::string rest;
            std::getline(in, rest);
        }
        throw IoError(path + ": truncated header");
    };
    if (token() != magic) throw IoError(path + ": expected " + std::string(magic));
    int w = 0, h = 0, maxv = 0;
    try {
        w = std::stoi(token());
        h = std::stoi(token());
        maxv = std::stoi(token());
    } catch (const std::logic_error&) {
        throw IoError(path + ": malformed header");
    }
    if (w <= 0 || h <= 0 || maxv != 255) throw IoError(path + ": only 8-bit images are supported");
    in.get();
    const auto offset = static_cast<std::size_t>(in.tellg());
    const std::size_t need = static_cast<std::size_t>(w) * h * channels;
    if (data.size() < offset + need) throw IoError(path + ": truncated pixel data");
    Tensor4<double> t(Shape{1, channels, h, w});
    const auto* p = reinterpret_cast<const unsigned char*>(data.data() + offset);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c) t(0, c, y, x) = *p++ / 255.0;
    return t;
}

}  // namespace

void write_ppm(const std::string& path, const Tensor4<double>& rgb) {
    if (rgb.c() != 3) throw ShapeError("write_ppm: expected 3 channels, got " + rgb.shape().str());
    write_netpbm(path, "P6", rgb, 3);
}

void write_pgm(const std::string& path, const Tensor4<double>& gray) {
    write_netpbm(path, "P5", gray, 1);
}

Tensor4<double> read_ppm(const std::string& path) {
    return read_netpbm(path, "P6", 3);
}

Tensor4<double> read_pgm(const std::string& path) {
    return read_netpbm(path, "P5", 1);
}

// ---------------------------------------------------------------------------
// key=value

std::map<std::string, std::string> parse_key_values(std::istream& in) {
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    };
    std::map<std::string, std::string> kv;
    std::string line;
    int no = 0;
    while (std::getline(in, line)) {
        ++no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("line " + std::to_string(no) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw std::invalid_argument("line " + std::to_string(no) + ": empty key");
        if (!kv.emplace(key, trim(line.substr(eq + 1))).second) {
            throw std::invalid_argument("line " + std::to_string(no) + ": repeated key " + key);
        }
    }
    return kv;
}

std::map<std::string, std::string> read_key_values(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read config " + path);
    try {
        return parse_key_values(f);
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
}

#define FSL_INSTANTIATE_IO(T)                                                            \
    template void Checkpoint::put(const std::string&, const Tensor4<T>&);               \
    template void Checkpoint::get(const std::string&, Tensor4<T>&) const;               \
    template Checkpoint pack_network(FSLNet<T>&, const Adam<T>*);                        \
    template void unpack_into(const Checkpoint&, FSLNet<T>&, Adam<T>*);                  \
    template std::unique_ptr<FSLNet<T>> load_network(const std::string&);

FSL_INSTANTIATE_IO(float)
FSL_INSTANTIATE_IO(double)

}  // namespace fsl::io
