package com.example.batch;

import java.util.List;

/** Bounded batch execution shared by all migrated jobs. */
public class BatchRunner {
    public <T> List<T> run(List<T> items, int limit) throws Exception {
        return items.subList(0, Math.min(limit, items.size()));
    }

    public boolean isIdle() {
        return true;
    }

    protected void reset() {
        // subclasses drop buffered work here
    }
}
