package com.example.store;

/** Key-value persistence used by the generated services. */
public interface Store {
    String get(String key);

    void put(String key, String value);
}
