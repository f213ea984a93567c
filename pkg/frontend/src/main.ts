import { createClient } from './api';
import { SessionView } from './app';

function requireEl<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
}

const view = new SessionView(createClient(''), {
  transcript: requireEl('transcript'),
  spec: requireEl('spec-panel'),
  results: requireEl('results'),
  status: requireEl('status'),
  input: requireEl<HTMLInputElement>('draft'),
  send: requireEl<HTMLButtonElement>('send'),
});

requireEl<HTMLButtonElement>('send').addEventListener('click', () => void view.send());
requireEl<HTMLInputElement>('draft').addEventListener('keydown', (ev) => {
  if (ev.key === 'Enter') void view.send();
});

void view.open();
