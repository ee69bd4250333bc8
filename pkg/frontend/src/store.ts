// Browser-local registry of sessions started from this client. The dashboard
// reads it; the teaching flow keeps each entry's phase/round current. The
// server has no session-listing endpoint, so this is the dashboard's world.

export interface SessionRecord {
    session_id: string;
    dataset: string;
    strategy: string;
    created_at: string;
    phase: string;
    round: number;
    score: number | null;
}

const STORAGE_KEY = "teachkit.sessions";

export class SessionStore {
    constructor(private readonly storage: Storage = window.localStorage) {}

    list(): SessionRecord[] {
        const raw = this.storage.getItem(STORAGE_KEY);
        if (!raw) return [];
        try {
            return JSON.parse(raw) as SessionRecord[];
        } catch {
            return [];
        }
    }

    add(record: SessionRecord): void {
        const records = this.list().filter((r) => r.session_id !== record.session_id);
        records.push(record);
        this.save(records);
    }

    update(sessionId: string, patch: Partial<SessionRecord>): void {
        const records = this.list().map((r) =>
            r.session_id === sessionId ? { ...r, ...patch } : r,
        );
        this.save(records);
    }

    private save(records: SessionRecord[]): void {
        this.storage.setItem(STORAGE_KEY, JSON.stringify(records));
    }
}
