#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace estrisk::io {

// Minimal ordered JSON value used for all emitted documents: keys keep
// insertion order and doubles are printed with 17 significant digits, so
// identical runs serialize to identical bytes.
class JsonValue {
public:
    static JsonValue object();
    static JsonValue array();
    static JsonValue str(std::string s);
    static JsonValue number(double v);
    static JsonValue integer(std::int64_t v);
    static JsonValue boolean(bool v);
    static JsonValue null();

    JsonValue& set(const std::string& key, JsonValue v);  // objects
    JsonValue& push(JsonValue v);                         // arrays

    std::string dump(int indent = 2) const;

private:
    enum class Type { object, array, string, number, integer, boolean, null_t };
    Type type_ = Type::null_t;
    std::string string_;
    double number_ = 0.0;
    std::int64_t integer_ = 0;
    bool boolean_ = false;
    std::vector<std::pair<std::string, JsonValue>> members_;
    std::vector<JsonValue> elements_;

    void dump_to(std::string& out, int indent, int depth) const;
};

}  // namespace estrisk::io
