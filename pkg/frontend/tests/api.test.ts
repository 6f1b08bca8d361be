import { describe, expect, it } from 'vitest';

import { ApiError, WorkbenchClient } from '../src/api.js';

interface Recorded {
  url: string;
  method: string;
  body: unknown;
}

function stubClient(status: number, payload: unknown) {
  const calls: Recorded[] = [];
  const client = new WorkbenchClient({
    baseUrl: 'http://test',
    fetchImpl: async (url, init) => {
      calls.push({
        url,
        method: init?.method ?? 'GET',
        body: init?.body ? JSON.parse(init.body as string) : undefined,
      });
      return new Response(JSON.stringify(payload), {
        status,
        headers: { 'content-type': 'application/json' },
      });
    },
  });
  return { client, calls };
}

describe('request construction', () => {
  it('posts run requests with dsl text and dataset id', async () => {
    const { client, calls } = stubClient(200, { run_id: 'r1' });
    await client.run('phenotype x {}', 'small');
    expect(calls).toHaveLength(1);
    expect(calls[0].url).toBe('http://test/run');
    expect(calls[0].method).toBe('POST');
    expect(calls[0].body).toEqual({ dsl: 'phenotype x {}', dataset_id: 'small' });
  });

  it('posts evaluate requests with run id, condition, and min cell', async () => {
    const { client, calls } = stubClient(200, { overall: {} });
    await client.evaluate('r1', 'htn', 5, ['race', 'sex']);
    expect(calls[0].url).toBe('http://test/evaluate');
    expect(calls[0].body).toEqual({
      run_id: 'r1',
      condition: 'htn',
      min_cell: 5,
      strata: ['race', 'sex'],
    });
  });

  it('omits strata entirely when none are chosen, deferring to the server default', async () => {
    const { client, calls } = stubClient(200, {});
    await client.evaluate('r1', 'htn', 10, []);
    expect(calls[0].body).toEqual({ run_id: 'r1', condition: 'htn', min_cell: 10 });
  });

  it('builds paged cohort urls', async () => {
    const { client, calls } = stubClient(200, { rows: [] });
    await client.cohortPage('abc', 3, 50);
    expect(calls[0].url).toBe('http://test/runs/abc/cohort?page=3&page_size=50');
    expect(calls[0].method).toBe('GET');
  });

  it('builds diff urls with both versions', async () => {
    const { client, calls } = stubClient(200, { changes: [] });
    await client.diff('demo', 1, 2);
    expect(calls[0].url).toBe('http://test/definitions/demo/diff?a=1&b=2');
  });

  it('registers definitions through POST, never touching existing versions', async () => {
    const { client, calls } = stubClient(201, { definition_id: 'demo', version: 2 });
    const saved = await client.saveDefinition('phenotype demo {}', 'me', 'widen window');
    expect(saved.version).toBe(2);
    expect(calls[0].method).toBe('POST');
    expect(calls[0].url).toBe('http://test/definitions');
    expect(calls[0].body).toEqual({
      dsl: 'phenotype demo {}',
      author: 'me',
      change_note: 'widen window',
    });
  });

  it('strips a trailing slash from the base url', async () => {
    const calls: Recorded[] = [];
    const client = new WorkbenchClient({
      baseUrl: 'http://test/',
      fetchImpl: async (url, init) => {
        calls.push({ url, method: init?.method ?? 'GET', body: undefined });
        return new Response('[]', { status: 200 });
      },
    });
    await client.datasets();
    expect(calls[0].url).toBe('http://test/datasets');
  });
});

describe('error handling', () => {
  it('surfaces 422 issue lists verbatim', async () => {
    const issues = [
      { path: '1:11', message: "expected '{'" },
      { path: '2:3', message: 'unknown keyword' },
    ];
    const { client } = stubClient(422, { detail: { issues } });
    const err = await client.parse('bad text').catch((e) => e as ApiError);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(422);
    expect(err.issues).toEqual(issues);
  });

  it('wraps string details as a single issue', async () => {
    const { client } = stubClient(404, { detail: "unknown run 'zzz'" });
    const err = await client.cohortPage('zzz', 1, 10).catch((e) => e as ApiError);
    expect(err.status).toBe(404);
    expect(err.message).toBe("unknown run 'zzz'");
    expect(err.issues).toEqual([{ path: '$', message: "unknown run 'zzz'" }]);
  });

  it('copes with non-json error bodies', async () => {
    const client = new WorkbenchClient({
      baseUrl: 'http://test',
      fetchImpl: async () => new Response('gateway timeout', { status: 504 }),
    });
    const err = await client.datasets().catch((e) => e as ApiError);
    expect(err.status).toBe(504);
    expect(err.issues).toEqual([]);
  });

  it('passes abort signals through to fetch', async () => {
    let seen: AbortSignal | undefined;
    const client = new WorkbenchClient({
      baseUrl: 'http://test',
      fetchImpl: async (_url, init) => {
        seen = init?.signal ?? undefined;
        return new Response('{}', { status: 200 });
      },
    });
    const controller = new AbortController();
    await client.run('x', 'small', controller.signal);
    expect(seen).toBe(controller.signal);
  });
});
