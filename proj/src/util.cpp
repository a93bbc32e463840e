#include "fata/util.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <ctime>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include <openssl/evp.h>

#include "fata/error.hpp"

namespace fata {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::EmptyQuery: return "EmptyQuery";
        case ErrorCode::MissingPlaceholder: return "MissingPlaceholder";
        case ErrorCode::InvalidTemplate: return "InvalidTemplate";
        case ErrorCode::UnparseableOutput: return "UnparseableOutput";
        case ErrorCode::TooManyQuestions: return "TooManyQuestions";
        case ErrorCode::MismatchedAnswers: return "MismatchedAnswers";
        case ErrorCode::IllegalTransition: return "IllegalTransition";
        case ErrorCode::AuthError: return "AuthError";
        case ErrorCode::RateLimited: return "RateLimited";
        case ErrorCode::Timeout: return "Timeout";
        case ErrorCode::ProviderError: return "ProviderError";
        case ErrorCode::ReplayMiss: return "ReplayMiss";
        case ErrorCode::InvalidRequest: return "InvalidRequest";
        case ErrorCode::SchemaError: return "SchemaError";
        case ErrorCode::ShapeError: return "ShapeError";
        case ErrorCode::GenerationParseError: return "GenerationParseError";
        case ErrorCode::PreconditionViolation: return "PreconditionViolation";
        case ErrorCode::MissingArtifact: return "MissingArtifact";
        case ErrorCode::MissingArm: return "MissingArm";
        case ErrorCode::ScoreParseError: return "ScoreParseError";
        case ErrorCode::RangeError: return "RangeError";
        case ErrorCode::ValidationError: return "ValidationError";
        case ErrorCode::NonPositiveBaseline: return "NonPositiveBaseline";
        case ErrorCode::DegenerateSample: return "DegenerateSample";
        case ErrorCode::NonPositiveMean: return "NonPositiveMean";
        case ErrorCode::TooFewPoints: return "TooFewPoints";
        case ErrorCode::WrongDimensionCount: return "WrongDimensionCount";
        case ErrorCode::ItemMismatch: return "ItemMismatch";
        case ErrorCode::InsufficientData: return "InsufficientData";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::SessionNotFound: return "SessionNotFound";
        case ErrorCode::SessionExpired: return "SessionExpired";
    }
    return "Unknown";
}

std::string trim(std::string_view s) {
    auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::vector<std::string> split_lines(std::string_view s) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto nl = s.find('\n', start);
        if (nl == std::string_view::npos) {
            if (start < s.size()) lines.emplace_back(s.substr(start));
            break;
        }
        std::string_view line = s.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.emplace_back(line);
        start = nl + 1;
    }
    return lines;
}

bool starts_with_icase(std::string_view s, std::string_view prefix) {
    if (s.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(s[i])) != std::tolower(static_cast<unsigned char>(prefix[i])))
            return false;
    }
    return true;
}

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error(ErrorCode::IoError, "sha256 digest failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0x0f]);
    }
    return out;
}

std::string utc_now_iso8601() { return format_iso8601(std::chrono::system_clock::now()); }

std::string format_iso8601(std::chrono::system_clock::time_point tp) {
    using namespace std::chrono;
    auto since = duration_cast<milliseconds>(tp.time_since_epoch());
    auto ms = since.count() % 1000;
    if (ms < 0) ms += 1000;
    std::time_t t = system_clock::to_time_t(time_point_cast<seconds>(tp - milliseconds(ms)));
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << ms << 'Z';
    return os.str();
}

std::chrono::system_clock::time_point parse_iso8601(std::string_view s) {
    std::tm tm{};
    int ms = 0;
    std::string str(s);
    std::istringstream in(str);
    in >> std::get_time(&tm, "%Y-%m-%dT%H:%M:%S");
    if (in.fail()) throw Error(ErrorCode::SchemaError, "bad timestamp '" + str + "'");
    if (in.peek() == '.') {
        in.get();
        std::string digits;
        while (std::isdigit(in.peek())) digits += static_cast<char>(in.get());
        while (digits.size() < 3) digits += '0';
        ms = std::stoi(digits.substr(0, 3));
    }
    return std::chrono::system_clock::from_time_t(timegm(&tm)) + std::chrono::milliseconds(ms);
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error(ErrorCode::IoError, "short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

json read_json_file(const std::filesystem::path& path) {
    auto text = read_text_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::SchemaError, path.string() + ": " + e.what());
    }
}

void write_json_file(const std::filesystem::path& path, const json& value) {
    write_text_file(path, value.dump(2) + "\n");
}

void write_json_file(const std::filesystem::path& path, const ordered_json& value) {
    write_text_file(path, value.dump(2) + "\n");
}

void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    if (count == 0) return;
    workers = std::clamp<std::size_t>(workers, 1, count);
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr first_error;
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (;;) {
                    std::size_t i = next.fetch_add(1);
                    if (i >= count) return;
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(err_mu);
                        if (!first_error) first_error = std::current_exception();
                    }
                }
            });
        }
    }
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace fata
