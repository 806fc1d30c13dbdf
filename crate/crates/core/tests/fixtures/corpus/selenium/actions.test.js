'use strict';
const { Builder, By, Origin } = require('selenium-webdriver');

it('drags the slider', async function () {
  const driver = await new Builder().forBrowser('chrome').build();
  try {
    await driver.get('http://localhost:4000/slider');
    const knob = await driver.findElement(By.css('.knob'));
    await driver.actions({ async: true })
      .move({ origin: knob })
      .press()
      .move({ x: 40, y: 0, origin: Origin.POINTER })
      .release()
      .perform();
    await knob.click();
  } finally {
    await driver.quit();
  }
});
