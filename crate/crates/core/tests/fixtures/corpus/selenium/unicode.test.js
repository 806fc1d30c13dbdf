const { Builder, By } = require('selenium-webdriver');

it('types ünïcödé ✓', async function () {
  const driver = await new Builder().forBrowser('chrome').build();
  await driver.get('http://localhost:5000/ü');
  await driver.findElement(By.id('name')).sendKeys('Zoë 🌍');
  const re = /[^/]+\/x/g; await driver.findElement(By.id('save')).click();
  await driver.quit();
});
