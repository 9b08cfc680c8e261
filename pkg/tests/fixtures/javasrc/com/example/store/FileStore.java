package com.example.store;

import java.util.HashMap;
import java.util.Map;

/** In-memory stand-in for the production store. */
public class FileStore implements Store {
    private final Map<String, String> map = new HashMap<>();

    public String get(String key) {
        return map.get(key);
    }

    public void put(String key, String value) {
        map.put(key, value);
    }

    public int size() {
        return map.size();
    }

    private void evict() {
        map.clear();
    }

    /** One rendered row; quoting matches the legacy export format. */
    public static class Entry {
        public String render(char sep) {
            return "k" + sep + quote();
        }

        private String quote() {
            return "\"" + '"' + "\"";
        }
    }
}
