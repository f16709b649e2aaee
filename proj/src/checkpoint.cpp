#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "fedsel/error.hpp"
#include "fedsel/model.hpp"

namespace fedsel {

namespace {

constexpr std::array<char, 8> kMagic = {'F', 'S', 'M', 'O', 'D', 'E', 'L', '1'};

template <typename T>
void put_le(std::ostream& out, T value) {
    static_assert(std::is_unsigned_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.put(static_cast<char>((value >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(std::istream& in) {
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        const int ch = in.get();
        if (ch == std::char_traits<char>::eof()) throw ParseError("checkpoint is truncated");
        value |= static_cast<T>(static_cast<unsigned char>(ch)) << (8 * i);
    }
    return value;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
    params.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    out.write(kMagic.data(), kMagic.size());
    put_le<std::uint64_t>(out, params.version);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.layout.size()));
    for (const auto& t : params.layout) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
        for (auto d : t.dims) put_le<std::uint64_t>(out, d);
    }
    put_le<std::uint64_t>(out, params.values.size());
    for (double v : params.values) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    if (!out) throw Error("failed writing checkpoint " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open checkpoint " + path.string());
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) throw ParseError("not a model checkpoint: " + path.string());

    ModelParams p;
    p.version = get_le<std::uint64_t>(in);
    const auto tensors = get_le<std::uint32_t>(in);
    for (std::uint32_t t = 0; t < tensors; ++t) {
        TensorShape shape;
        shape.name.resize(get_le<std::uint32_t>(in));
        in.read(shape.name.data(), static_cast<std::streamsize>(shape.name.size()));
        if (!in) throw ParseError("checkpoint is truncated");
        const auto rank = get_le<std::uint32_t>(in);
        for (std::uint32_t r = 0; r < rank; ++r) shape.dims.push_back(get_le<std::uint64_t>(in));
        p.layout.push_back(std::move(shape));
    }
    const auto count = get_le<std::uint64_t>(in);
    p.values.reserve(std::min<std::uint64_t>(count, 1u << 20));
    for (std::uint64_t i = 0; i < count; ++i)
        p.values.push_back(std::bit_cast<double>(get_le<std::uint64_t>(in)));
    p.validate();
    return p;
}

}  // namespace fedsel
